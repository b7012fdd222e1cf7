//! Per-voxel BOLD time series and the analytics built on them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::{Atlas, Label, Region, VoxelId};
use crate::error::{Error, Result};
use crate::fsutil;

pub use crate::color::{encode_region_color, encode_voxel_color, VoxelColor};

pub const DEFAULT_DT_MS: f64 = 800.0;
pub const DEFAULT_TIMEPOINTS: usize = 166;
pub const BINARY_MAGIC: &[u8; 4] = b"DTBB";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalSource {
    Biological,
    Dtb,
}

impl SignalSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalSource::Biological => "biological",
            SignalSource::Dtb => "dtb",
        }
    }
}

/// BOLD series keyed by voxel id, all of length `n_timepoints`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSet {
    source: SignalSource,
    dt_ms: f64,
    n_timepoints: usize,
    series: BTreeMap<VoxelId, Vec<f64>>,
}

impl SignalSet {
    pub fn new(
        source: SignalSource,
        dt_ms: f64,
        n_timepoints: usize,
        series: BTreeMap<VoxelId, Vec<f64>>,
    ) -> Result<SignalSet> {
        if !(dt_ms > 0.0 && dt_ms.is_finite()) {
            return Err(Error::format(format!("dt_ms must be positive, got {dt_ms}")));
        }
        if n_timepoints == 0 {
            return Err(Error::format("n_timepoints must be at least 1"));
        }
        for (id, s) in &series {
            if s.len() != n_timepoints {
                return Err(Error::format(format!(
                    "voxel {id}: series length {} != {n_timepoints}",
                    s.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(format!("voxel {id}: non-finite value")));
            }
        }
        Ok(SignalSet { source, dt_ms, n_timepoints, series })
    }

    pub fn source(&self) -> SignalSource {
        self.source
    }

    pub fn with_source(mut self, source: SignalSource) -> Self {
        self.source = source;
        self
    }

    pub fn dt_ms(&self) -> f64 {
        self.dt_ms
    }

    pub fn n_timepoints(&self) -> usize {
        self.n_timepoints
    }

    pub fn voxel_count(&self) -> usize {
        self.series.len()
    }

    pub fn series(&self, id: VoxelId) -> Option<&[f64]> {
        self.series.get(&id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (VoxelId, &[f64])> + '_ {
        self.series.iter().map(|(id, s)| (*id, s.as_slice()))
    }

    /// Every voxel id must exist in the atlas.
    pub fn validate_against(&self, atlas: &Atlas) -> Result<()> {
        match self.series.keys().find(|id| !atlas.contains_voxel(**id)) {
            Some(id) => Err(Error::format(format!("unknown voxel id {id}"))),
            None => Ok(()),
        }
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t < self.n_timepoints {
            Ok(())
        } else {
            Err(Error::Bounds { index: t, len: self.n_timepoints })
        }
    }

    /// (min, max) over every stored value.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        self.series.values().flatten().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Affine map of every value by `(v - lo) / (hi - lo)`; all zeros when `hi == lo`.
    pub fn map_range(&self, lo: f64, hi: f64) -> SignalSet {
        let span = hi - lo;
        let series = self
            .series
            .iter()
            .map(|(id, s)| {
                let out = if span > 0.0 { s.iter().map(|v| (v - lo) / span).collect() } else { vec![0.0; s.len()] };
                (*id, out)
            })
            .collect();
        SignalSet { series, ..*self }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{},{}", self.dt_ms, self.n_timepoints);
        for (id, s) in &self.series {
            let _ = write!(out, "{id}");
            for v in s {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, source: SignalSource) -> Result<SignalSet> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::format("BOLD file is empty"))?;
        let mut h = header.split(',').map(str::trim);
        let dt_ms: f64 = parse_field(h.next(), 1, "dt_ms")?;
        let n_timepoints: usize = parse_field(h.next(), 1, "n_timepoints")?;
        if h.next().is_some() {
            return Err(Error::format("BOLD header must be `dt_ms,n_timepoints`"));
        }
        let mut series = BTreeMap::new();
        for (ln, line) in lines {
            let mut fields = line.split(',').map(str::trim);
            let id: VoxelId = parse_field(fields.next(), ln + 1, "voxel_id")?;
            let values = fields
                .map(|f| f.parse::<f64>().map_err(|_| Error::format(format!("line {}: bad value {f:?}", ln + 1))))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != n_timepoints {
                return Err(Error::format(format!(
                    "line {}: voxel {id} has {} values, expected {n_timepoints}",
                    ln + 1,
                    values.len()
                )));
            }
            if series.insert(id, values).is_some() {
                return Err(Error::format(format!("voxel {id} listed twice")));
            }
        }
        SignalSet::new(source, dt_ms, n_timepoints, series)
    }

    /// Binary variant: values are stored as f32.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.series.len() * (4 + 4 * self.n_timepoints));
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&(self.series.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_timepoints as u32).to_le_bytes());
        out.extend_from_slice(&self.dt_ms.to_le_bytes());
        for (id, s) in &self.series {
            out.extend_from_slice(&id.to_le_bytes());
            for v in s {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_binary(bytes: &[u8], source: SignalSource) -> Result<SignalSet> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != BINARY_MAGIC {
            return Err(Error::format("missing DTBB magic"));
        }
        let count = r.u32()? as usize;
        let n_timepoints = r.u32()? as usize;
        let dt_ms = r.f64()?;
        let mut series = BTreeMap::new();
        for _ in 0..count {
            let id = r.u32()?;
            let values = (0..n_timepoints).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
            if series.insert(id, values).is_some() {
                return Err(Error::format(format!("voxel {id} listed twice")));
            }
        }
        if !r.is_empty() {
            return Err(Error::format("trailing bytes after BOLD records"));
        }
        SignalSet::new(source, dt_ms, n_timepoints, series)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_binary())
    }
}

fn parse_field<T: std::str::FromStr>(f: Option<&str>, line: usize, what: &str) -> Result<T> {
    let f = f.ok_or_else(|| Error::format(format!("line {line}: missing {what}")))?;
    f.trim().parse().map_err(|_| Error::format(format!("line {line}: bad {what} {f:?}")))
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::format("truncated binary file"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}

/// Loads a BOLD file (CSV or `DTBB` binary) and validates it against `atlas`.
pub fn load_bold(path: &Path, atlas: &Atlas, source: SignalSource) -> Result<SignalSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let set = if bytes.starts_with(BINARY_MAGIC) {
        SignalSet::from_binary(&bytes, source)?
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::format("BOLD file is not UTF-8"))?;
        SignalSet::from_csv(text, source)?
    };
    set.validate_against(atlas)?;
    Ok(set)
}

/// Global min-max normalization over every value in the set.
pub fn minmax_normalize(set: &SignalSet) -> SignalSet {
    match set.value_range() {
        Some((lo, hi)) => set.map_range(lo, hi),
        None => set.clone(),
    }
}

/// Normalizes both sets against the union of their ranges.
pub fn minmax_normalize_shared(a: &SignalSet, b: &SignalSet) -> (SignalSet, SignalSet) {
    let range = match (a.value_range(), b.value_range()) {
        (Some((l1, h1)), Some((l2, h2))) => Some((l1.min(l2), h1.max(h2))),
        (r, None) | (None, r) => r,
    };
    match range {
        Some((lo, hi)) => (a.map_range(lo, hi), b.map_range(lo, hi)),
        None => (a.clone(), b.clone()),
    }
}

/// Mean over the region's voxels at `t`. Voxels missing from the set are skipped.
pub fn region_mean(set: &SignalSet, region: &Region, t: usize) -> Result<f64> {
    set.check_t(t)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for id in &region.voxel_ids {
        if let Some(s) = set.series.get(id) {
            sum += s[t];
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NotFound(format!("no signal for any voxel of region {}", region.label)));
    }
    Ok(sum / n as f64)
}

pub fn voxel_mean_over_time(set: &SignalSet, id: VoxelId) -> Result<f64> {
    let s = set.series(id).ok_or_else(|| Error::NotFound(format!("voxel {id}")))?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Pointwise mean series over the given voxels (voxels absent from the set are skipped).
pub fn mean_series<'a>(set: &SignalSet, ids: impl IntoIterator<Item = &'a VoxelId>) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; set.n_timepoints];
    let mut n = 0usize;
    for id in ids {
        if let Some(s) = set.series.get(id) {
            for (a, v) in acc.iter_mut().zip(s) {
                *a += v;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NotFound("no signal for the selected voxels".into()));
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    Ok(acc)
}

fn first_argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Time index of maximal mean activity pooled over all member voxels; earliest on ties.
pub fn peak_time(set: &SignalSet, regions: &[&Region]) -> Result<usize> {
    if regions.is_empty() {
        return Err(Error::Degenerate("peak_time needs at least one region".into()));
    }
    let series = mean_series(set, regions.iter().flat_map(|r| r.voxel_ids.iter()))?;
    Ok(first_argmax(&series))
}

/// The `k` highest region means at `t`, descending, ties by ascending label.
///
/// Regions without any signal are skipped.
pub fn top_regions<'a>(
    set: &SignalSet,
    regions: impl IntoIterator<Item = &'a Region>,
    t: usize,
    k: usize,
) -> Result<Vec<(Label, f64)>> {
    set.check_t(t)?;
    let mut means = Vec::new();
    for r in regions {
        match region_mean(set, r, t) {
            Ok(m) => means.push((r.label, m)),
            Err(Error::NotFound(_)) => {}
            Err(e) => return Err(e),
        }
    }
    means.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    means.truncate(k);
    Ok(means)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "ids")]
pub enum CompareScope {
    All,
    Regions(Vec<Label>),
    Voxels(Vec<VoxelId>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub pearson_r: f64,
    /// Positive when the second set trails the first.
    pub lag: i64,
    /// Set when either scope-mean series is constant; `pearson_r` is then 0.
    pub degenerate: bool,
}

/// Pearson correlation; `(0, true)` when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> (f64, bool) {
    let n = x.len().min(y.len());
    if n == 0 {
        return (0.0, true);
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return (0.0, true);
    }
    ((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0), false)
}

/// Normalized cross-correlation of mean-centred, zero-padded series at shift `s`
/// (pairs `a[t]` with `b[t + s]`).
pub fn cross_correlation(a: &[f64], b: &[f64], s: i64) -> f64 {
    let n = a.len().min(b.len());
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let na = a[..n].iter().map(|v| (v - ma) * (v - ma)).sum::<f64>().sqrt();
    let nb = b[..n].iter().map(|v| (v - mb) * (v - mb)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for t in 0..n as i64 {
        let u = t + s;
        if (0..n as i64).contains(&u) {
            sum += (a[t as usize] - ma) * (b[u as usize] - mb);
        }
    }
    sum / (na * nb)
}

/// Shift in `[-T/2, T/2]` maximizing [`cross_correlation`]; ties go to the
/// smallest `|s|`, then to the negative shift.
pub fn estimate_lag(a: &[f64], b: &[f64]) -> i64 {
    let half = (a.len().min(b.len()) / 2) as i64;
    let mut best = (0i64, cross_correlation(a, b, 0));
    for m in 1..=half {
        for s in [-m, m] {
            let c = cross_correlation(a, b, s);
            if c > best.1 {
                best = (s, c);
            }
        }
    }
    best.0
}

fn scope_voxels(atlas: &Atlas, scope: &CompareScope) -> Result<Vec<VoxelId>> {
    Ok(match scope {
        CompareScope::All => atlas.voxels().map(|v| v.id).collect(),
        CompareScope::Regions(labels) => {
            let mut ids = Vec::new();
            for l in labels {
                ids.extend_from_slice(&atlas.region_by_label(*l)?.voxel_ids);
            }
            ids
        }
        CompareScope::Voxels(ids) => ids.clone(),
    })
}

/// Compares the scope-mean series of two sets.
pub fn compare_sets(a: &SignalSet, b: &SignalSet, atlas: &Atlas, scope: &CompareScope) -> Result<ComparisonReport> {
    if a.n_timepoints != b.n_timepoints {
        return Err(Error::Shape(format!(
            "time points differ: {} vs {}",
            a.n_timepoints, b.n_timepoints
        )));
    }
    let ids = scope_voxels(atlas, scope)?;
    let ids: Vec<VoxelId> = ids.into_iter().filter(|id| a.series.contains_key(id) || b.series.contains_key(id)).collect();
    if let Some(id) = ids.iter().find(|id| a.series.contains_key(id) != b.series.contains_key(id)) {
        return Err(Error::Shape(format!("voxel {id} present in only one set")));
    }
    let sa = mean_series(a, &ids)?;
    let sb = mean_series(b, &ids)?;
    Ok(compare_series(&sa, &sb))
}

pub fn compare_series(a: &[f64], b: &[f64]) -> ComparisonReport {
    let (pearson_r, degenerate) = pearson(a, b);
    let lag = if degenerate { 0 } else { estimate_lag(a, b) };
    ComparisonReport { pearson_r, lag, degenerate }
}

/// Per-region comparison, evaluated in parallel; output in label order.
pub fn compare_by_region(a: &SignalSet, b: &SignalSet, atlas: &Atlas) -> Result<Vec<(Label, ComparisonReport)>> {
    let labels: Vec<Label> = atlas.regions().iter().filter(|r| !r.voxel_ids.is_empty()).map(|r| r.label).collect();
    labels
        .par_iter()
        .map(|&l| compare_sets(a, b, atlas, &CompareScope::Regions(vec![l])).map(|r| (l, r)))
        .collect()
}
