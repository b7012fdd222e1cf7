//! Sparse DTI structural connectivity.
//!
//! Entries are directed (source → target) and stored sorted by `(src, dst)`.
//! Every tie is broken by ascending `(src, dst)` so results are reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atlas::{Atlas, Label, VoxelId};
use crate::color::{gradient_stops, ColorRGBA};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::signal::ByteReader;

pub const BINARY_MAGIC: &[u8; 4] = b"DTBC";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub src: VoxelId,
    pub dst: VoxelId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    n_voxels: u32,
    entries: Vec<Entry>,
    normalized: bool,
}

impl ConnectivityMatrix {
    /// Validates and sorts the entries. Self-loops, negative or non-finite
    /// weights and duplicate pairs are rejected.
    pub fn new(n_voxels: u32, mut entries: Vec<Entry>) -> Result<ConnectivityMatrix> {
        for e in &entries {
            if e.src == e.dst {
                return Err(Error::format(format!("self-loop on voxel {}", e.src)));
            }
            if !(e.weight >= 0.0 && e.weight.is_finite()) {
                return Err(Error::format(format!("entry ({}, {}) has invalid weight {}", e.src, e.dst, e.weight)));
            }
        }
        entries.sort_by_key(|e| (e.src, e.dst));
        if let Some(w) = entries.windows(2).find(|w| (w[0].src, w[0].dst) == (w[1].src, w[1].dst)) {
            return Err(Error::format(format!("duplicate entry ({}, {})", w[0].src, w[0].dst)));
        }
        Ok(ConnectivityMatrix { n_voxels, entries, normalized: false })
    }

    pub fn n_voxels(&self) -> u32 {
        self.n_voxels
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total_weight(&self) -> f64 {
        neumaier_sum(self.entries.iter().map(|e| e.weight))
    }

    pub fn validate_against(&self, atlas: &Atlas) -> Result<()> {
        for e in &self.entries {
            for id in [e.src, e.dst] {
                if !atlas.contains_voxel(id) {
                    return Err(Error::format(format!("entry ({}, {}) references unknown voxel {id}", e.src, e.dst)));
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.entries.len() * 24);
        let _ = writeln!(out, "{},{}", self.n_voxels, self.entries.len());
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{}", e.src, e.dst, e.weight);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<ConnectivityMatrix> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::format("DTI file is empty"))?;
        let (n_voxels, n_entries) = match header.split(',').map(str::trim).collect::<Vec<_>>()[..] {
            [a, b] => (
                a.parse::<u32>().map_err(|_| Error::format(format!("bad n_voxels {a:?}")))?,
                b.parse::<usize>().map_err(|_| Error::format(format!("bad n_entries {b:?}")))?,
            ),
            _ => return Err(Error::format("DTI header must be `n_voxels,n_entries`")),
        };
        let mut entries = Vec::with_capacity(n_entries);
        for (ln, line) in lines {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::format(format!("line {}: expected `src,dst,weight`, got {line:?}", ln + 1));
            if f.len() != 3 {
                return Err(bad());
            }
            entries.push(Entry {
                src: f[0].parse().map_err(|_| bad())?,
                dst: f[1].parse().map_err(|_| bad())?,
                weight: f[2].parse().map_err(|_| bad())?,
            });
        }
        if entries.len() != n_entries {
            return Err(Error::format(format!("header declares {n_entries} entries, found {}", entries.len())));
        }
        ConnectivityMatrix::new(n_voxels, entries)
    }

    /// Binary variant: weights are stored as f32.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.entries.len() * 12);
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&self.n_voxels.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.src.to_le_bytes());
            out.extend_from_slice(&e.dst.to_le_bytes());
            out.extend_from_slice(&(e.weight as f32).to_le_bytes());
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<ConnectivityMatrix> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != BINARY_MAGIC {
            return Err(Error::format("missing DTBC magic"));
        }
        let n_voxels = r.u32()?;
        let n = r.u64()? as usize;
        let mut entries = Vec::with_capacity(n.min(bytes.len() / 12));
        for _ in 0..n {
            entries.push(Entry { src: r.u32()?, dst: r.u32()?, weight: f64::from(r.f32()?) });
        }
        if !r.is_empty() {
            return Err(Error::format("trailing bytes after DTI records"));
        }
        ConnectivityMatrix::new(n_voxels, entries)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_binary())
    }

    /// Averages `(i, j)` and `(j, i)` into both directions.
    pub fn symmetrized(&self) -> ConnectivityMatrix {
        let mut acc: BTreeMap<(VoxelId, VoxelId), f64> = BTreeMap::new();
        for e in &self.entries {
            *acc.entry((e.src, e.dst)).or_default() += e.weight / 2.0;
            *acc.entry((e.dst, e.src)).or_default() += e.weight / 2.0;
        }
        let entries = acc.into_iter().map(|((src, dst), weight)| Entry { src, dst, weight }).collect();
        ConnectivityMatrix { n_voxels: self.n_voxels, entries, normalized: false }
    }
}

/// Loads a DTI edge list (CSV or `DTBC` binary) and validates voxel ids against `atlas`.
pub fn load_dti(path: &Path, atlas: &Atlas) -> Result<ConnectivityMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let m = if bytes.starts_with(BINARY_MAGIC) {
        ConnectivityMatrix::from_binary(&bytes)?
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::format("DTI file is not UTF-8"))?;
        ConnectivityMatrix::from_csv(text)?
    };
    m.validate_against(atlas)?;
    Ok(m)
}

fn neumaier_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Divides every weight by the total so the weights sum to one.
pub fn global_normalize(m: &ConnectivityMatrix) -> Result<ConnectivityMatrix> {
    let total = m.total_weight();
    if !(total > 0.0) {
        return Err(Error::Degenerate("matrix has no positive weight".into()));
    }
    let entries = m.entries.iter().map(|e| Entry { weight: e.weight / total, ..*e }).collect();
    Ok(ConnectivityMatrix { n_voxels: m.n_voxels, entries, normalized: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: VoxelId,
    pub dst: VoxelId,
    pub weight: f64,
    /// Fraction of the full matrix with weight ≤ this edge's weight.
    pub rank_pct: f64,
}

impl Edge {
    pub fn reversed(self) -> Edge {
        Edge { src: self.dst, dst: self.src, ..self }
    }
}

/// Edges in descending weight order (ties by ascending `(src, dst)`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeSet {
    pub edges: Vec<Edge>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Edge> {
        self.edges.iter()
    }

    pub fn filter(&self, mut keep: impl FnMut(&Edge) -> bool) -> EdgeSet {
        EdgeSet { edges: self.edges.iter().filter(|e| keep(e)).copied().collect() }
    }
}

/// Number of entries selected by fraction `f` of `n`: `⌈f·n⌉`, tolerant to
/// representation error (0.1 × 380360 selects 38036, not 38037).
pub fn fraction_count(f: f64, n: usize) -> usize {
    let x = f * n as f64;
    let r = x.round();
    let k = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.ceil() };
    (k as usize).min(n)
}

/// Every entry ranked over the full matrix, heaviest first.
pub fn rank_all(m: &ConnectivityMatrix) -> EdgeSet {
    let n = m.entries.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m.entries[a].weight.total_cmp(&m.entries[b].weight));
    let mut rank = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let w = m.entries[order[i]].weight;
        let mut j = i;
        while j < n && m.entries[order[j]].weight == w {
            j += 1;
        }
        let pct = j as f64 / n as f64;
        for &o in &order[i..j] {
            rank[o] = pct;
        }
        i = j;
    }
    // Entries are sorted by (src, dst), so a stable descending sort keeps that tie order.
    order.sort_by(|&a, &b| m.entries[b].weight.total_cmp(&m.entries[a].weight).then(a.cmp(&b)));
    let edges = order
        .into_iter()
        .map(|o| {
            let e = m.entries[o];
            Edge { src: e.src, dst: e.dst, weight: e.weight, rank_pct: rank[o] }
        })
        .collect();
    EdgeSet { edges }
}

/// The `⌈f·N⌉` heaviest entries with ranks computed over the full matrix.
pub fn top_fraction(m: &ConnectivityMatrix, f: f64) -> Result<EdgeSet> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::Invalid(format!("fraction must lie in (0, 1], got {f}")));
    }
    if m.is_empty() {
        return Err(Error::Degenerate("matrix has no entries".into()));
    }
    let mut all = rank_all(m);
    all.edges.truncate(fraction_count(f, m.len()));
    Ok(all)
}

/// Rank-percentile threshold: keeps edges with `rank_pct > tau`, plus the
/// edges tied for the maximum weight (`rank_pct = 1`) so that `tau = 1`
/// shows only the heaviest connections.
///
/// With distinct weights, `tau = 0.8` keeps exactly the top 20%.
pub fn threshold_filter(edges: &EdgeSet, tau: f64) -> EdgeSet {
    edges.filter(|e| e.rank_pct > tau || e.rank_pct >= 1.0)
}

/// Absolute-weight cut for raw-probability thresholds.
pub fn threshold_filter_weight(edges: &EdgeSet, min_weight: f64) -> EdgeSet {
    edges.filter(|e| e.weight >= min_weight)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    #[default]
    RankPercentile,
    AbsoluteWeight,
}

/// Directed region-to-region aggregate weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionAdjacency {
    pub n_regions: usize,
    pub entries: BTreeMap<(Label, Label), f64>,
    /// Total weight of intra-region pairs (excluded from `entries`).
    pub intra_weight: f64,
}

impl RegionAdjacency {
    /// Outgoing neighbours of `from`, heaviest first, ties by ascending label.
    pub fn ranked_neighbors(&self, from: Label) -> Vec<(Label, f64)> {
        let mut out: Vec<(Label, f64)> =
            self.entries.range((from, 0)..=(from, Label::MAX)).map(|(&(_, b), &w)| (b, w)).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum::<f64>()
    }
}

/// Sums voxel-pair weights per ordered region pair, excluding intra-region pairs.
pub fn region_adjacency(m: &ConnectivityMatrix, atlas: &Atlas) -> Result<RegionAdjacency> {
    let mut entries: BTreeMap<(Label, Label), f64> = BTreeMap::new();
    let mut intra = 0.0;
    for e in &m.entries {
        let (Some(a), Some(b)) = (atlas.region_of(e.src), atlas.region_of(e.dst)) else {
            return Err(Error::format(format!("entry ({}, {}) references a voxel outside the atlas", e.src, e.dst)));
        };
        if a == b {
            intra += e.weight;
        } else {
            *entries.entry((a, b)).or_default() += e.weight;
        }
    }
    Ok(RegionAdjacency { n_regions: atlas.regions().len(), entries, intra_weight: intra })
}

/// Edges whose source voxel lies in any of the given regions.
pub fn edges_from_regions(edges: &EdgeSet, atlas: &Atlas, labels: &BTreeSet<Label>) -> Result<EdgeSet> {
    for l in labels {
        atlas.region_by_label(*l)?;
    }
    Ok(edges.filter(|e| atlas.region_of(e.src).is_some_and(|r| labels.contains(&r))))
}

/// Per-vertex colors from the source end (green) to the target end (orange).
pub fn direction_gradient(_edge: &Edge, n_stops: usize) -> Result<Vec<ColorRGBA>> {
    if n_stops < 2 {
        return Err(Error::Invalid(format!("direction gradient needs at least 2 stops, got {n_stops}")));
    }
    Ok(gradient_stops(n_stops))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::{GREEN, ORANGE};
    use proptest::prelude::*;

    fn m(entries: &[(u32, u32, f64)]) -> ConnectivityMatrix {
        ConnectivityMatrix::new(
            100,
            entries.iter().map(|&(src, dst, weight)| Entry { src, dst, weight }).collect(),
        )
        .unwrap()
    }

    fn distinct(n: usize) -> ConnectivityMatrix {
        m(&(0..n as u32).map(|i| (i, i + 1, ((i as f64 + 0.5) * 0.618_033_988_75).fract() + 1.0)).collect::<Vec<_>>())
    }

    #[test]
    fn csv_examples() {
        let mx = ConnectivityMatrix::from_csv("3,2\n0,1,2\n1,2,6\n").unwrap();
        assert_eq!(mx.len(), 2);
        assert!(!mx.is_normalized());
        assert!(matches!(ConnectivityMatrix::from_csv("6,1\n5,5,1\n"), Err(Error::Format(_))));
        assert!(matches!(ConnectivityMatrix::from_csv("6,1\n1,2,-1\n"), Err(Error::Format(_))));
        assert!(matches!(ConnectivityMatrix::from_csv("6,2\n1,2,1\n"), Err(Error::Format(_))));
        assert!(matches!(ConnectivityMatrix::from_csv("6,2\n1,2,1\n1,2,3\n"), Err(Error::Format(_))));
    }

    #[test]
    fn binary_round_trip() {
        let mx = m(&[(0, 1, 0.25), (2, 1, 1.0 / 3.0)]);
        let back = ConnectivityMatrix::from_binary(&mx.to_binary()).unwrap();
        for (a, b) in mx.entries().iter().zip(back.entries()) {
            assert_eq!((a.src, a.dst), (b.src, b.dst));
            assert_eq!(a.weight as f32, b.weight as f32);
        }
    }

    #[test]
    fn normalize_examples() {
        let n = global_normalize(&m(&[(0, 1, 2.0), (1, 2, 6.0)])).unwrap();
        assert!(n.is_normalized());
        assert_eq!(n.entries().iter().map(|e| e.weight).collect::<Vec<_>>(), vec![0.25, 0.75]);
        assert_eq!(global_normalize(&m(&[(3, 4, 7.5)])).unwrap().entries()[0].weight, 1.0);
        assert!(matches!(global_normalize(&m(&[(0, 1, 0.0)])), Err(Error::Degenerate(_))));
    }

    #[test]
    fn top_fraction_examples() {
        let mx = distinct(10);
        let heaviest = mx.entries().iter().max_by(|a, b| a.weight.total_cmp(&b.weight)).unwrap();
        let t = top_fraction(&mx, 0.1).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!((t.edges[0].src, t.edges[0].dst), (heaviest.src, heaviest.dst));
        assert_eq!(t.edges[0].rank_pct, 1.0);
        assert_eq!(top_fraction(&mx, 1.0).unwrap().len(), 10);
        assert!(top_fraction(&mx, 0.0).is_err());
        assert_eq!(fraction_count(0.1, 380_360), 38_036);
        assert_eq!(fraction_count(0.15, 10), 2);
    }

    #[test]
    fn rank_pct_ties_share_higher_value() {
        let all = rank_all(&m(&[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 2.0), (3, 4, 5.0)]));
        let pct: Vec<_> = all.iter().map(|e| e.rank_pct).collect();
        assert_eq!(pct, vec![1.0, 0.75, 0.75, 0.25]);
        assert_eq!((all.edges[1].src, all.edges[2].src), (1, 2));
    }

    #[test]
    fn threshold_examples() {
        let all = rank_all(&distinct(100));
        assert_eq!(threshold_filter(&all, 0.8).len(), 20);
        assert_eq!(threshold_filter(&all, 0.0).len(), 100);
        assert_eq!(threshold_filter(&all, 1.0).len(), 1);
        let tied = rank_all(&m(&[(0, 1, 3.0), (1, 2, 3.0), (2, 3, 1.0)]));
        assert_eq!(threshold_filter(&tied, 1.0).len(), 2);
        assert_eq!(threshold_filter_weight(&tied, 2.0).len(), 2);
    }

    #[test]
    fn gradient_examples() {
        let e = Edge { src: 1, dst: 2, weight: 1.0, rank_pct: 1.0 };
        assert_eq!(direction_gradient(&e, 2).unwrap(), vec![GREEN, ORANGE]);
        assert_eq!(direction_gradient(&e, 3).unwrap()[1], ColorRGBA::new(0.5, 0.75, 0.0, 1.0));
        assert!(direction_gradient(&e, 1).is_err());
        // A reversed edge drawn along the original geometry sees the stops reversed.
        let fwd = direction_gradient(&e, 5).unwrap();
        let mut rev = direction_gradient(&e.reversed(), 5).unwrap();
        rev.reverse();
        assert_eq!(fwd.first(), rev.last());
        assert_eq!(fwd.last(), rev.first());
    }

    #[test]
    fn symmetrize_averages() {
        let s = m(&[(0, 1, 2.0), (1, 0, 4.0), (2, 3, 1.0)]).symmetrized();
        let w: Vec<_> = s.entries().iter().map(|e| (e.src, e.dst, e.weight)).collect();
        assert_eq!(w, vec![(0, 1, 3.0), (1, 0, 3.0), (2, 3, 0.5), (3, 2, 0.5)]);
    }

    proptest! {
        #[test]
        fn nested_and_composable(ws in prop::collection::vec(0.0f64..10.0, 1..80), f1 in 0.01f64..1.0, f2 in 0.01f64..1.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let mx = m(&ws.iter().enumerate().map(|(i, w)| (i as u32, i as u32 + 1, *w)).collect::<Vec<_>>());
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            let small = top_fraction(&mx, lo).unwrap();
            let big = top_fraction(&mx, hi).unwrap();
            prop_assert!(small.iter().all(|e| big.edges.contains(e)));

            let all = rank_all(&mx);
            prop_assert_eq!(threshold_filter(&threshold_filter(&all, a), b), threshold_filter(&all, a.max(b)));

            let n = global_normalize(&mx);
            if let Ok(n) = n {
                prop_assert!((n.total_weight() - 1.0).abs() < 1e-9);
                let before: Vec<_> = all.iter().map(|e| (e.src, e.dst)).collect();
                let after: Vec<_> = rank_all(&n).iter().map(|e| (e.src, e.dst)).collect();
                prop_assert_eq!(before, after);
            }
        }

        #[test]
        fn threshold_fraction(n in 1usize..300, tau in 0.0f64..1.0) {
            let all = rank_all(&distinct(n));
            let kept = threshold_filter(&all, tau).len() as f64;
            prop_assert!((kept / n as f64 - (1.0 - tau)).abs() <= 1.0 / n as f64 + 1e-12);
        }
    }
}
