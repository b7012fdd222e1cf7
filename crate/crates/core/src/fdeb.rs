//! 3D force-directed edge bundling.
//!
//! Each edge becomes a polyline whose interior control points are pulled by
//! a spring toward their polyline neighbours and by every compatible edge
//! toward that edge's control point with the same index:
//!
//! ```text
//! F(p_i) = k_p · ((p_{i-1} − p_i) + (p_{i+1} − p_i))
//!        + Σ_{Q : c(P,Q) ≥ threshold} c(P,Q) · (q_i − p_i) / max(‖q_i − p_i‖, ε)²
//! ```
//!
//! The interaction is a unit vector toward `q_i` scaled by `c / ‖q_i − p_i‖`
//! (inverse-distance falloff); squaring the clamped distance keeps the term
//! bounded and makes it vanish for coincident points. Compatibility multiplies
//! the attraction. A reading where distance is *divided* by compatibility
//! diverges as `c → 0` and is not used; incompatible pairs are pruned by the
//! threshold instead.
//!
//! Distances are in input units (mm): `step_size` defaults to `0.04 · L`,
//! `L` being the mean input edge length. Two changes keep the explicit update
//! stable:
//!
//! - The guard distance for edge `P` is `ε_P = max(1e-6 · L, √(step · Σ_Q c(P,Q)))`.
//!   Inside `ε_P` the attraction is linear in the offset, so the summed pull
//!   never carries a point past its targets and nearly coincident points
//!   merge instead of jittering around each other.
//! - A point moves by `step_size × F` with `‖F‖` clamped to 1, so no point
//!   travels more than `step_size` per iteration (this bounds the spring term
//!   for long edges).
//!
//! [`force_on_point`] evaluates the plain force for a caller-supplied `ε`.
//!
//! Schedule: `n_cycles` cycles, each subdividing every polyline (interval count
//! doubles) and then running `I` Jacobi iterations. The step halves and `I`
//! decays by ×2/3 (floor 10) from one cycle to the next. Within an iteration
//! all forces read the previous positions, so per-edge work runs in parallel
//! and the result does not depend on the worker count.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::{Atlas, VoxelId};
use crate::connectome::EdgeSet;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::geom::Vec3;

/// Lower bound of the guard distance, relative to the mean edge length.
pub const EPSILON_REL: f64 = 1e-6;
/// Default step, as a fraction of the mean edge length.
pub const DEFAULT_STEP_REL: f64 = 0.04;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BundleParams {
    pub k_p: f64,
    pub n_cycles: usize,
    pub initial_subdivisions: usize,
    pub iterations_per_cycle: usize,
    pub iteration_decay: f64,
    pub min_iterations: usize,
    /// Input units. `None` means `0.04 × mean edge length`.
    pub step_size: Option<f64>,
    pub compat_threshold: f64,
    /// Prune candidate pairs with a uniform grid over edge midpoints. The set
    /// of pairs passing the threshold is identical either way.
    pub spatial_grid: bool,
}

impl Default for BundleParams {
    fn default() -> Self {
        BundleParams {
            k_p: 0.1,
            n_cycles: 6,
            initial_subdivisions: 1,
            iterations_per_cycle: 50,
            iteration_decay: 2.0 / 3.0,
            min_iterations: 10,
            step_size: None,
            compat_threshold: 0.05,
            spatial_grid: true,
        }
    }
}

impl BundleParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if !(self.k_p > 0.0 && self.k_p.is_finite()) {
            return bad(format!("k_p must be positive, got {}", self.k_p));
        }
        if self.n_cycles == 0 {
            return bad("n_cycles must be at least 1".into());
        }
        if self.initial_subdivisions == 0 {
            return bad("initial_subdivisions must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.compat_threshold) {
            return bad(format!("compat_threshold must lie in [0, 1], got {}", self.compat_threshold));
        }
        if !(self.iteration_decay > 0.0 && self.iteration_decay <= 1.0) {
            return bad(format!("iteration_decay must lie in (0, 1], got {}", self.iteration_decay));
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("step_size must be positive, got {s}"));
            }
        }
        Ok(())
    }

    /// Iteration count for each cycle.
    pub fn iteration_schedule(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_cycles);
        let mut it = self.iterations_per_cycle as f64;
        for c in 0..self.n_cycles {
            if c > 0 {
                it = (it * self.iteration_decay).floor();
            }
            out.push((it as usize).max(self.min_iterations.min(self.iterations_per_cycle)));
        }
        out
    }

    /// Interval count of the output polylines.
    pub fn output_intervals(&self) -> usize {
        self.initial_subdivisions << self.n_cycles
    }
}

/// Ordered control points `p_0 … p_m` with the source edge weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Vec3>,
    pub weight: f64,
}

impl Polyline {
    pub fn straight(a: Vec3, b: Vec3, intervals: usize, weight: f64) -> Polyline {
        let m = intervals.max(1);
        let mut points: Vec<Vec3> = (0..=m).map(|k| a.lerp(b, k as f64 / m as f64)).collect();
        points[0] = a;
        points[m] = b;
        Polyline { points, weight }
    }

    pub fn intervals(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }
}

/// Resamples a polyline to twice as many intervals, uniformly by arc length.
/// Endpoints are copied unchanged.
pub fn subdivide(line: &Polyline) -> Polyline {
    let mut points = Vec::new();
    resample_into(&line.points, line.intervals().max(1) * 2, &mut points);
    Polyline { points, weight: line.weight }
}

fn resample_into(src: &[Vec3], intervals: usize, out: &mut Vec<Vec3>) {
    out.clear();
    let first = src[0];
    let last = src[src.len() - 1];
    let seg: Vec<f64> = src.windows(2).map(|w| w[0].distance(w[1])).collect();
    let total: f64 = seg.iter().sum();
    out.push(first);
    if total == 0.0 {
        out.extend(std::iter::repeat_n(first, intervals));
        let n = out.len();
        out[n - 1] = last;
        return;
    }
    let mut j = 0usize;
    let mut walked = 0.0;
    for k in 1..intervals {
        let target = total * k as f64 / intervals as f64;
        while j + 1 < seg.len() && walked + seg[j] < target {
            walked += seg[j];
            j += 1;
        }
        let t = if seg[j] > 0.0 { ((target - walked) / seg[j]).clamp(0.0, 1.0) } else { 0.0 };
        out.push(src[j].lerp(src[j + 1], t));
    }
    out.push(last);
}

fn angle_compat(p: Vec3, q: Vec3) -> f64 {
    (p.dot(q).abs() / (p.norm() * q.norm())).min(1.0)
}

fn scale_compat(lp: f64, lq: f64) -> f64 {
    let avg = (lp + lq) / 2.0;
    2.0 / (avg / lp.min(lq) + lp.max(lq) / avg)
}

fn position_compat(avg: f64, mid_p: Vec3, mid_q: Vec3) -> f64 {
    avg / (avg + mid_p.distance(mid_q))
}

/// How well `q` is seen from `p`: projects `q`'s endpoints onto the line
/// through `p` and compares the projected midpoint with `p`'s midpoint.
///
/// The line through `p` lies in the plane spanned by `p`'s direction and
/// the midpoint displacement, so projecting onto that plane first gives the
/// same result as projecting straight onto the line.
fn visibility(p0: Vec3, p1: Vec3, q0: Vec3, q1: Vec3) -> f64 {
    let dir = p1 - p0;
    let len_sq = dir.norm_sq();
    let project = |x: Vec3| p0 + dir * ((x - p0).dot(dir) / len_sq);
    let (i0, i1) = (project(q0), project(q1));
    let span = i0.distance(i1);
    if span == 0.0 {
        return 0.0;
    }
    let im = i0.midpoint(i1);
    (1.0 - 2.0 * p0.midpoint(p1).distance(im) / span).max(0.0)
}

/// Geometric compatibility of two segments in `[0, 1]`: the product of the
/// angle, scale, position and visibility measures.
pub fn compatibility(p: (Vec3, Vec3), q: (Vec3, Vec3)) -> Result<f64> {
    let (dp, dq) = (p.1 - p.0, q.1 - q.0);
    let (lp, lq) = (dp.norm(), dq.norm());
    if lp == 0.0 || lq == 0.0 {
        return Err(Error::Degenerate("zero-length segment".into()));
    }
    if p == q {
        return Ok(1.0);
    }
    let avg = (lp + lq) / 2.0;
    let vis = visibility(p.0, p.1, q.0, q.1).min(visibility(q.0, q.1, p.0, p.1));
    let c = angle_compat(dp, dq) * scale_compat(lp, lq) * position_compat(avg, p.0.midpoint(p.1), q.0.midpoint(q.1)) * vis;
    Ok(c.clamp(0.0, 1.0))
}

/// Symmetric compatibility lists holding only pairs with `c ≥ threshold`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompatibilityCache {
    lists: Vec<Vec<(u32, f64)>>,
}

impl CompatibilityCache {
    pub fn build(segments: &[(Vec3, Vec3)], threshold: f64, use_grid: bool) -> Result<CompatibilityCache> {
        for (i, s) in segments.iter().enumerate() {
            if s.0 == s.1 {
                return Err(Error::Degenerate(format!("edge {i} has coincident endpoints")));
            }
        }
        let candidates: Vec<Vec<u32>> = if use_grid {
            grid_candidates(segments, threshold)
        } else {
            (0..segments.len()).map(|i| ((i + 1) as u32..segments.len() as u32).collect()).collect()
        };
        let upper: Vec<Vec<(u32, f64)>> = candidates
            .par_iter()
            .enumerate()
            .map(|(i, cands)| {
                cands
                    .iter()
                    .filter_map(|&j| {
                        let c = compatibility(segments[i], segments[j as usize]).ok()?;
                        (c >= threshold && c > 0.0).then_some((j, c))
                    })
                    .collect()
            })
            .collect();
        let mut lists: Vec<Vec<(u32, f64)>> = vec![Vec::new(); segments.len()];
        for (i, row) in upper.iter().enumerate() {
            for &(j, c) in row {
                lists[i].push((j, c));
                lists[j as usize].push((i as u32, c));
            }
        }
        lists.par_iter_mut().for_each(|l| l.sort_by_key(|x| x.0));
        Ok(CompatibilityCache { lists })
    }

    pub fn get(&self, p: usize, q: usize) -> Option<f64> {
        if p == q {
            return Some(1.0);
        }
        let l = self.lists.get(p)?;
        l.binary_search_by_key(&(q as u32), |x| x.0).ok().map(|k| l[k].1)
    }

    pub fn neighbors(&self, p: usize) -> &[(u32, f64)] {
        &self.lists[p]
    }

    /// Number of unordered compatible pairs.
    pub fn pair_count(&self) -> usize {
        self.lists.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Upper-triangle candidate lists: every pair whose midpoint distance could
/// still give a position measure (and thus a product) at or above `threshold`.
fn grid_candidates(segments: &[(Vec3, Vec3)], threshold: f64) -> Vec<Vec<u32>> {
    let n = segments.len();
    let all = || (0..n).map(|i| ((i + 1) as u32..n as u32).collect()).collect();
    if threshold <= 0.0 || n < 2 {
        return all();
    }
    let lens: Vec<f64> = segments.iter().map(|s| s.0.distance(s.1)).collect();
    let mids: Vec<Vec3> = segments.iter().map(|s| s.0.midpoint(s.1)).collect();
    let lmax = lens.iter().copied().fold(0.0, f64::max);
    // position = avg / (avg + d) ≥ t  ⇔  d ≤ avg · (1/t − 1)
    let factor = 1.0 / threshold - 1.0;
    let radius = |i: usize| (lens[i] + lmax) / 2.0 * factor * (1.0 + 1e-12);
    let cell = radius(lens.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|x| x.0).unwrap_or(0));
    let (lo, hi) = mids.iter().fold((mids[0], mids[0]), |(lo, hi), m| {
        (
            Vec3::new(lo.x.min(m.x), lo.y.min(m.y), lo.z.min(m.z)),
            Vec3::new(hi.x.max(m.x), hi.y.max(m.y), hi.z.max(m.z)),
        )
    });
    if !(cell > 0.0) || (hi - lo).norm() <= cell {
        return all();
    }
    let key = |m: Vec3| {
        (
            ((m.x - lo.x) / cell).floor() as i64,
            ((m.y - lo.y) / cell).floor() as i64,
            ((m.z - lo.z) / cell).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
    for (i, m) in mids.iter().enumerate() {
        grid.entry(key(*m)).or_default().push(i as u32);
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let (cx, cy, cz) = key(mids[i]);
            let r = radius(i);
            let mut out = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                            out.extend(
                                bucket.iter().copied().filter(|&j| j as usize > i && mids[i].distance(mids[j as usize]) <= r),
                            );
                        }
                    }
                }
            }
            out.sort_unstable();
            out
        })
        .collect()
}

#[inline]
fn attraction(p: Vec3, q: Vec3, c: f64, eps_sq: f64) -> Vec3 {
    let d = q - p;
    d * (c / d.norm_sq().max(eps_sq))
}

/// Net force on interior point `i` of `line`.
///
/// `others` pairs each other polyline with its compatibility to `line`;
/// pairs below `params.compat_threshold` contribute nothing. `epsilon` is the
/// guard distance.
pub fn force_on_point(
    line: &Polyline,
    i: usize,
    others: &[(&Polyline, f64)],
    params: &BundleParams,
    epsilon: f64,
) -> Result<Vec3> {
    let m = line.intervals();
    if i == 0 || i >= m {
        return Err(Error::Bounds { index: i, len: m });
    }
    let p = &line.points;
    let mut f = ((p[i - 1] - p[i]) + (p[i + 1] - p[i])) * params.k_p;
    for (q, c) in others {
        if *c >= params.compat_threshold && *c > 0.0 {
            if q.intervals() != m {
                return Err(Error::Shape(format!("polyline has {} intervals, expected {m}", q.intervals())));
            }
            f += attraction(p[i], q.points[i], *c, epsilon * epsilon);
        }
    }
    Ok(f)
}

/// An edge with resolved endpoint positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleInput {
    pub src: VoxelId,
    pub dst: VoxelId,
    pub weight: f64,
    pub a: Vec3,
    pub b: Vec3,
}

/// Resolves edge endpoints to voxel positions.
pub fn inputs_from_edges(edges: &EdgeSet, atlas: &Atlas) -> Result<Vec<BundleInput>> {
    edges
        .iter()
        .map(|e| {
            let pos = |id: VoxelId| {
                atlas.voxel(id).map(|v| v.position_mm).ok_or_else(|| Error::NotFound(format!("voxel {id}")))
            };
            Ok(BundleInput { src: e.src, dst: e.dst, weight: e.weight, a: pos(e.src)?, b: pos(e.dst)? })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundledEdge {
    pub src: VoxelId,
    pub dst: VoxelId,
    pub weight: f64,
    pub points: Vec<Vec3>,
}

impl BundledEdge {
    pub fn polyline(&self) -> Polyline {
        Polyline { points: self.points.clone(), weight: self.weight }
    }
}

pub fn mean_edge_length(inputs: &[BundleInput]) -> f64 {
    if inputs.is_empty() {
        return 0.0;
    }
    inputs.iter().map(|e| e.a.distance(e.b)).sum::<f64>() / inputs.len() as f64
}

/// Bundles the edges. Runs on the current rayon pool.
pub fn bundle(inputs: &[BundleInput], params: &BundleParams) -> Result<Vec<BundledEdge>> {
    params.validate()?;
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((i, _)) = inputs.iter().enumerate().find(|(_, e)| e.a == e.b) {
        return Err(Error::Degenerate(format!("edge {i} ({} -> {}) has coincident endpoints", inputs[i].src, inputs[i].dst)));
    }
    let unit = mean_edge_length(inputs);
    let segments: Vec<(Vec3, Vec3)> = inputs.iter().map(|e| (e.a, e.b)).collect();
    let cache = CompatibilityCache::build(&segments, params.compat_threshold, params.spatial_grid)?;

    let n = inputs.len();
    let mut m = params.initial_subdivisions;
    let mut cur: Vec<Vec3> = Vec::with_capacity(n * (m + 1));
    for s in &segments {
        cur.extend(Polyline::straight(s.0, s.1, m, 0.0).points);
    }

    let mut step = params.step_size.unwrap_or(DEFAULT_STEP_REL * unit);
    let eps_floor_sq = (EPSILON_REL * unit).powi(2);
    let compat_sum: Vec<f64> = (0..n).map(|e| cache.neighbors(e).iter().map(|x| x.1).sum()).collect();
    for (cycle, iters) in params.iteration_schedule().into_iter().enumerate() {
        if cycle > 0 {
            step /= 2.0;
        }
        let stride = m + 1;
        m *= 2;
        let new_stride = m + 1;
        let mut next = vec![Vec3::ZERO; n * new_stride];
        next.par_chunks_mut(new_stride).enumerate().for_each_init(Vec::new, |buf, (e, out)| {
            resample_into(&cur[e * stride..(e + 1) * stride], m, buf);
            out.copy_from_slice(buf);
        });
        cur = next;
        let mut next = cur.clone();
        for _ in 0..iters {
            iterate(&cur, &mut next, &cache, m, step, params.k_p, |e| (step * compat_sum[e]).max(eps_floor_sq));
            std::mem::swap(&mut cur, &mut next);
        }
    }

    let stride = m + 1;
    Ok(inputs
        .iter()
        .enumerate()
        .map(|(e, inp)| {
            let mut points: Vec<Vec3> = cur[e * stride..(e + 1) * stride].to_vec();
            points[0] = inp.a;
            points[m] = inp.b;
            BundledEdge { src: inp.src, dst: inp.dst, weight: inp.weight, points }
        })
        .collect())
}

fn iterate(
    cur: &[Vec3],
    next: &mut [Vec3],
    cache: &CompatibilityCache,
    m: usize,
    step: f64,
    k_p: f64,
    eps_sq: impl Fn(usize) -> f64 + Sync,
) {
    let stride = m + 1;
    next.par_chunks_mut(stride).enumerate().for_each_init(
        || vec![Vec3::ZERO; stride],
        |acc, (e, out)| {
            let p = &cur[e * stride..(e + 1) * stride];
            acc.iter_mut().for_each(|a| *a = Vec3::ZERO);
            let eps_sq = eps_sq(e);
            for &(q, c) in cache.neighbors(e) {
                let qp = &cur[q as usize * stride..(q as usize + 1) * stride];
                for i in 1..m {
                    acc[i] += attraction(p[i], qp[i], c, eps_sq);
                }
            }
            out[0] = p[0];
            out[m] = p[m];
            for i in 1..m {
                let spring = ((p[i - 1] - p[i]) + (p[i + 1] - p[i])) * k_p;
                out[i] = p[i] + displacement(spring + acc[i], step);
            }
        },
    );
}

/// `step × force`, with the force magnitude clamped to 1 so a point moves at
/// most `step` per iteration.
#[inline]
fn displacement(force: Vec3, step: f64) -> Vec3 {
    let n = force.norm_sq();
    if n > 1.0 {
        force * (step / n.sqrt())
    } else {
        force * step
    }
}

/// Bundled-edge document as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleDocument {
    pub params: BundleParams,
    pub edges: Vec<BundledEdge>,
}

pub fn export_bundles(edges: &[BundledEdge], params: &BundleParams, path: &Path) -> Result<()> {
    let doc = BundleDocument { params: params.clone(), edges: edges.to_vec() };
    let mut bytes = serde_json::to_vec(&doc)?;
    bytes.push(b'\n');
    fsutil::write_atomic(path, &bytes)
}

pub fn import_bundles(path: &Path) -> Result<BundleDocument> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(format!("bundle file: {e}")))
}
