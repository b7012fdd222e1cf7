//! Axis-aligned slab sections through the atlas.
//!
//! A slab is the set of voxels whose coordinate on the slicing axis lies
//! within `thickness/2` of the plane (both faces inclusive). Rasters bin slab
//! voxels onto a grid of `spacing_mm` cells over the two in-plane axes; the
//! grid spans the whole atlas bounding box so rasters of one atlas line up.
//! Row 0 is the highest in-plane `v` coordinate, so rows read top-down.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::atlas::{Atlas, VoxelId};
use crate::connectome::EdgeSet;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::signal::SignalSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Sagittal,
    Horizontal,
    Coronal,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Sagittal, Axis::Coronal, Axis::Horizontal];

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Sagittal => "sagittal",
            Axis::Horizontal => "horizontal",
            Axis::Coronal => "coronal",
        }
    }

    /// In-plane axes `(u, v)`: `u` runs along image columns, `v` up the rows.
    pub fn in_plane(self) -> (usize, usize) {
        match self {
            Axis::Sagittal => (1, 2),
            Axis::Coronal => (0, 2),
            Axis::Horizontal => (0, 1),
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Axis> {
        match s.to_ascii_lowercase().as_str() {
            "sagittal" => Ok(Axis::Sagittal),
            "horizontal" | "axial" => Ok(Axis::Horizontal),
            "coronal" => Ok(Axis::Coronal),
            _ => Err(Error::Invalid(format!("unknown slice axis {s:?} (expected sagittal, coronal or horizontal)"))),
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Spatial axis index: sagittal cuts left/right (x), coronal front/back (y),
/// horizontal upper/lower (z).
pub fn plane_axis_map(axis: Axis) -> usize {
    match axis {
        Axis::Sagittal => 0,
        Axis::Coronal => 1,
        Axis::Horizontal => 2,
    }
}

const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicePlane {
    pub axis: Axis,
    pub coordinate_mm: f64,
    pub thickness_mm: f64,
}

impl SlicePlane {
    pub fn new(axis: Axis, coordinate_mm: f64, thickness_mm: f64) -> Result<SlicePlane> {
        if !(thickness_mm > 0.0 && thickness_mm.is_finite()) {
            return Err(Error::Invalid(format!("slab thickness must be positive, got {thickness_mm}")));
        }
        if !coordinate_mm.is_finite() {
            return Err(Error::Invalid(format!("slab coordinate must be finite, got {coordinate_mm}")));
        }
        Ok(SlicePlane { axis, coordinate_mm, thickness_mm })
    }

    /// Plane one voxel pitch thick.
    pub fn for_atlas(atlas: &Atlas, axis: Axis, coordinate_mm: f64) -> Result<SlicePlane> {
        SlicePlane::new(axis, coordinate_mm, atlas.spacing_mm())
    }

    pub fn contains(&self, pos: f64) -> bool {
        (pos - self.coordinate_mm).abs() <= self.thickness_mm / 2.0
    }
}

/// Slab voxels sorted by id.
pub fn voxels_in_slab(atlas: &Atlas, plane: &SlicePlane) -> Vec<VoxelId> {
    let k = plane_axis_map(plane.axis);
    atlas.voxels().filter(|v| plane.contains(v.position_mm[k])).map(|v| v.id).collect()
}

/// Covers the atlas with adjacent slabs `thickness_mm` apart, starting at the
/// lowest voxel coordinate. Membership here is half-open (lower face closed,
/// upper face open, except the last slab which is closed on both faces), so
/// every voxel lands in exactly one slab.
pub fn slab_stack(atlas: &Atlas, axis: Axis, thickness_mm: f64) -> Result<Vec<(SlicePlane, Vec<VoxelId>)>> {
    SlicePlane::new(axis, 0.0, thickness_mm)?;
    let k = plane_axis_map(axis);
    let Some((lo, hi)) = atlas.bounds() else {
        return Ok(Vec::new());
    };
    let (lo, hi) = (lo[k], hi[k]);
    let n = (((hi - lo) / thickness_mm).floor() as usize + 1).max(1);
    let mut slabs: Vec<(SlicePlane, Vec<VoxelId>)> = (0..n)
        .map(|i| {
            let centre = lo + (i as f64 + 0.5) * thickness_mm;
            (SlicePlane { axis, coordinate_mm: centre, thickness_mm }, Vec::new())
        })
        .collect();
    for v in atlas.voxels() {
        let i = (((v.position_mm[k] - lo) / thickness_mm).floor() as usize).min(n - 1);
        slabs[i].1.push(v.id);
    }
    Ok(slabs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRaster {
    pub plane: SlicePlane,
    pub axis_u: String,
    pub axis_v: String,
    pub origin_mm: [f64; 2],
    pub cell_mm: f64,
    /// `rows[r][c]`; row 0 is the top (highest `v`).
    pub rows: Vec<Vec<Option<f64>>>,
    pub time_index: usize,
}

impl SliceRaster {
    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.rows.get(row).and_then(|r| r.get(col)).copied().flatten()
    }

    /// In-plane coordinates of a cell centre.
    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        let iv = self.height() - 1 - row;
        [self.origin_mm[0] + col as f64 * self.cell_mm, self.origin_mm[1] + iv as f64 * self.cell_mm]
    }

    pub fn occupied(&self) -> usize {
        self.rows.iter().flatten().filter(|c| c.is_some()).count()
    }

    /// ASCII PGM (P2). Values are clamped to [0, 1] and scaled to 0–255;
    /// empty cells are 0.
    pub fn to_pgm(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "P2");
        let _ = writeln!(s, "# {} {} mm t={}", self.plane.axis, self.plane.coordinate_mm, self.time_index);
        let _ = writeln!(s, "{} {}", self.width(), self.height());
        let _ = writeln!(s, "255");
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|c| quantize(*c).to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "axis": self.plane.axis,
            "coordinate_mm": self.plane.coordinate_mm,
            "thickness_mm": self.plane.thickness_mm,
            "t": self.time_index,
            "axis_u": self.axis_u,
            "axis_v": self.axis_v,
            "origin_mm": self.origin_mm,
            "cell_mm": self.cell_mm,
            "rows": self.rows,
        })
    }

    pub fn file_stem(&self) -> String {
        format!("slice_{}_{}_t{}", self.plane.axis, self.plane.coordinate_mm, self.time_index)
    }

    /// Writes `<stem>.pgm` and `<stem>.json` into `dir`, returning both paths.
    pub fn export(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        self.export_prefix(&dir.join(self.file_stem()))
    }

    /// Writes `<prefix>.pgm` and `<prefix>.json`, creating parent directories.
    pub fn export_prefix(&self, prefix: &Path) -> Result<(PathBuf, PathBuf)> {
        let with_ext = |ext: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(ext);
            PathBuf::from(s)
        };
        let pgm = with_ext(".pgm");
        let json = with_ext(".json");
        fsutil::write_atomic(&pgm, self.to_pgm().as_bytes())?;
        let mut bytes = serde_json::to_vec_pretty(&self.sidecar())?;
        bytes.push(b'\n');
        fsutil::write_atomic(&json, &bytes)?;
        Ok((pgm, json))
    }
}

pub fn quantize(v: Option<f64>) -> u8 {
    match v {
        Some(v) if v.is_finite() => (v.clamp(0.0, 1.0) * 255.0).round() as u8,
        _ => 0,
    }
}

/// Grid geometry shared by every raster of an atlas along one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterGrid {
    pub origin: [f64; 2],
    pub cell: f64,
    pub cols: usize,
    pub rows: usize,
}

impl RasterGrid {
    pub fn for_atlas(atlas: &Atlas, axis: Axis) -> RasterGrid {
        let (ku, kv) = axis.in_plane();
        let cell = atlas.spacing_mm();
        match atlas.bounds() {
            None => RasterGrid { origin: [0.0, 0.0], cell, cols: 1, rows: 1 },
            Some((lo, hi)) => {
                let span = |k: usize| ((hi[k] - lo[k]) / cell + 0.5).floor() as usize + 1;
                RasterGrid { origin: [lo[ku], lo[kv]], cell, cols: span(ku), rows: span(kv) }
            }
        }
    }

    /// `(row, col)` of the cell containing in-plane point `(u, v)`, if inside.
    pub fn locate(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let iu = ((u - self.origin[0]) / self.cell + 0.5).floor();
        let iv = ((v - self.origin[1]) / self.cell + 0.5).floor();
        if iu < 0.0 || iv < 0.0 || iu as usize >= self.cols || iv as usize >= self.rows {
            return None;
        }
        Some((self.rows - 1 - iv as usize, iu as usize))
    }
}

/// Mean signal per cell at time `t` over the slab.
pub fn raster(atlas: &Atlas, set: &SignalSet, plane: &SlicePlane, t: usize) -> Result<SliceRaster> {
    if t >= set.n_timepoints() {
        return Err(Error::Bounds { index: t, len: set.n_timepoints() });
    }
    let grid = RasterGrid::for_atlas(atlas, plane.axis);
    let (ku, kv) = plane.axis.in_plane();
    #[derive(Clone, Copy)]
    struct Acc {
        sum: f64,
        n: u32,
        lo: f64,
        hi: f64,
    }
    let mut cells = vec![vec![None::<Acc>; grid.cols]; grid.rows];
    for id in voxels_in_slab(atlas, plane) {
        let Some(series) = set.series(id) else { continue };
        let v = atlas.voxel(id).expect("slab voxel belongs to atlas");
        let Some((r, c)) = grid.locate(v.position_mm[ku], v.position_mm[kv]) else { continue };
        let x = series[t];
        let acc = cells[r][c].get_or_insert(Acc { sum: 0.0, n: 0, lo: x, hi: x });
        acc.sum += x;
        acc.n += 1;
        acc.lo = acc.lo.min(x);
        acc.hi = acc.hi.max(x);
    }
    let rows = cells
        .into_iter()
        .map(|row| row.into_iter().map(|a| a.map(|a| (a.sum / a.n as f64).clamp(a.lo, a.hi))).collect())
        .collect();
    Ok(SliceRaster {
        plane: *plane,
        axis_u: AXIS_NAMES[ku].to_string(),
        axis_v: AXIS_NAMES[kv].to_string(),
        origin_mm: grid.origin,
        cell_mm: grid.cell,
        rows,
        time_index: t,
    })
}

/// Edges whose source voxel lies in the slab.
pub fn edges_from_slice(edges: &EdgeSet, slab_voxels: &[VoxelId]) -> EdgeSet {
    let slab: BTreeSet<VoxelId> = slab_voxels.iter().copied().collect();
    edges.filter(|e| slab.contains(&e.src))
}
