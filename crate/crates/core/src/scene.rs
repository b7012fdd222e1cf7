//! Session state and render-ready scene payloads.
//!
//! A [`SceneService`] holds loaded datasets (read-only, shared) and the live
//! sessions. Each snapshot is a pure function of the dataset and the session
//! state; nothing in the payload depends on wall-clock time, so identical
//! states serialize to identical bytes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::atlas::{region_sphere_radius, Label, Region, Species, VoxelId};
use crate::color::{encode_region_color, encode_voxel_color, ColorRGBA};
use crate::connectome::{direction_gradient, global_normalize, rank_all, region_adjacency, threshold_filter, EdgeSet, RegionAdjacency};
use crate::error::{Error, Result};
use crate::fdeb::BundleDocument;
use crate::geom::Vec3;
use crate::signal::{
    compare_sets, minmax_normalize, minmax_normalize_shared, region_mean, voxel_mean_over_time, CompareScope, ComparisonReport,
    SignalSet, SignalSource,
};
use crate::slicer::{raster, SlicePlane, SliceRaster};
use crate::store::Dataset;

pub const DEFAULT_TAU: f64 = 0.9;
pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(30 * 60);
/// Sphere radius per cube-root voxel, in voxel pitches: a sphere then has the
/// volume of its voxels, `(3/4π)^(1/3)`.
pub const SPHERE_SCALE: f64 = 0.620_350_490_899_400_1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorRangeMode {
    PerSet,
    #[default]
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub dataset_id: String,
    pub time_index: usize,
    pub threshold_tau: f64,
    pub selected_regions: BTreeSet<Label>,
    /// In first-visit order.
    pub visited_regions: Vec<Label>,
    pub compare_mode: bool,
    /// Normalization used in compare mode; a single view is always per-set.
    pub color_range_mode: ColorRangeMode,
    pub slice: Option<SlicePlane>,
}

impl SessionState {
    pub fn fresh(session_id: String, dataset_id: String) -> SessionState {
        SessionState {
            session_id,
            dataset_id,
            time_index: 0,
            threshold_tau: DEFAULT_TAU,
            selected_regions: BTreeSet::new(),
            visited_regions: Vec::new(),
            compare_mode: false,
            color_range_mode: ColorRangeMode::default(),
            slice: None,
        }
    }

    pub fn highlighted(&self) -> BTreeSet<Label> {
        self.selected_regions.iter().chain(self.visited_regions.iter()).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub label: Label,
    pub name: String,
    pub group: SignalSource,
    pub center_mm: Vec3,
    pub radius: f64,
    pub value: f64,
    pub color: ColorRGBA,
    pub highlighted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePolyline {
    pub src: VoxelId,
    pub dst: VoxelId,
    pub weight: f64,
    pub rank_pct: f64,
    pub bundled: bool,
    /// Source lies in a selected region.
    pub flagged: bool,
    pub points: Vec<Vec3>,
    pub color_stops: Vec<ColorRGBA>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelCube {
    pub voxel_id: VoxelId,
    pub group: SignalSource,
    pub position_mm: Vec3,
    pub color: ColorRGBA,
    pub emissive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub voxel_id: VoxelId,
    pub region_label: Label,
    pub group: SignalSource,
    pub anchor_mm: Vec3,
    pub series: Vec<f64>,
    pub mean_color: ColorRGBA,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub session_id: String,
    pub dataset_id: String,
    pub time_index: usize,
    pub time_ms: f64,
    pub n_timepoints: usize,
    pub threshold_tau: f64,
    pub compare_mode: bool,
    /// Lateral (x) shift of the dtb group in compare mode.
    pub group_offset_mm: f64,
    pub spheres: Vec<Sphere>,
    pub polylines: Vec<ScenePolyline>,
    pub voxels: Vec<VoxelCube>,
    pub charts: Vec<Chart>,
    pub raster: Option<SliceRaster>,
}

impl SceneSnapshot {
    pub fn object_count(&self) -> usize {
        self.spheres.len() + self.polylines.len() + self.voxels.len() + self.charts.len() + usize::from(self.raster.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub species: Species,
    pub n_regions: usize,
    pub n_functional_regions: usize,
    pub n_voxels: usize,
    pub n_timepoints: usize,
    pub dt_ms: f64,
    pub n_dti_entries: usize,
    pub has_bundles: bool,
}

/// A dataset plus everything derived from it once at load time.
#[derive(Debug)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    bio_norm: SignalSet,
    dtb_norm: SignalSet,
    bio_shared: SignalSet,
    dtb_shared: SignalSet,
    ranked: EdgeSet,
    adjacency: RegionAdjacency,
    bundle_index: HashMap<(VoxelId, VoxelId), usize>,
    group_offset_mm: f64,
}

impl LoadedDataset {
    pub fn new(dataset: Dataset) -> Result<LoadedDataset> {
        let normalized = global_normalize(&dataset.dti)?;
        let ranked = rank_all(&normalized);
        let adjacency = region_adjacency(&normalized, &dataset.atlas)?;
        let (bio_shared, dtb_shared) = minmax_normalize_shared(&dataset.biological, &dataset.dtb);
        let bundle_index = dataset
            .bundles
            .as_ref()
            .map(|b| b.edges.iter().enumerate().map(|(i, e)| ((e.src, e.dst), i)).collect())
            .unwrap_or_default();
        let group_offset_mm = match dataset.atlas.bounds() {
            Some((lo, hi)) => (hi.x - lo.x) + 10.0 * dataset.atlas.spacing_mm(),
            None => 0.0,
        };
        Ok(LoadedDataset {
            bio_norm: minmax_normalize(&dataset.biological),
            dtb_norm: minmax_normalize(&dataset.dtb),
            bio_shared,
            dtb_shared,
            ranked,
            adjacency,
            bundle_index,
            group_offset_mm,
            dataset,
        })
    }

    pub fn info(&self) -> DatasetInfo {
        let d = &self.dataset;
        DatasetInfo {
            id: d.name.clone(),
            species: d.atlas.species().clone(),
            n_regions: d.atlas.regions().len(),
            n_functional_regions: d.atlas.functional_regions().len(),
            n_voxels: d.atlas.voxel_count(),
            n_timepoints: d.biological.n_timepoints(),
            dt_ms: d.biological.dt_ms(),
            n_dti_entries: d.dti.len(),
            has_bundles: d.bundles.is_some(),
        }
    }

    pub fn ranked_edges(&self) -> &EdgeSet {
        &self.ranked
    }

    pub fn adjacency(&self) -> &RegionAdjacency {
        &self.adjacency
    }

    fn groups(&self, state: &SessionState) -> Vec<(SignalSource, &SignalSet, f64)> {
        if !state.compare_mode {
            return vec![(SignalSource::Biological, &self.bio_norm, 0.0)];
        }
        let (a, b) = match state.color_range_mode {
            ColorRangeMode::Shared => (&self.bio_shared, &self.dtb_shared),
            ColorRangeMode::PerSet => (&self.bio_norm, &self.dtb_norm),
        };
        vec![(SignalSource::Biological, a, 0.0), (SignalSource::Dtb, b, self.group_offset_mm)]
    }

    /// Assembles the payload for `state`.
    pub fn snapshot(&self, state: &SessionState) -> Result<SceneSnapshot> {
        let atlas = &self.dataset.atlas;
        let t = state.time_index;
        let highlighted = state.highlighted();
        let scale = SPHERE_SCALE * atlas.spacing_mm();
        let shown: Vec<&Region> = atlas.functional_regions().into_iter().filter(|r| !r.voxel_ids.is_empty()).collect();
        let selected_regions: Vec<&Region> = state.selected_regions.iter().filter_map(|l| atlas.region(*l)).collect();
        let mut spheres = Vec::new();
        let mut voxels = Vec::new();
        let mut charts = Vec::new();
        for (group, set, dx) in self.groups(state) {
            let shift = Vec3::new(dx, 0.0, 0.0);
            for r in &shown {
                let value = region_mean(set, r, t)?;
                spheres.push(Sphere {
                    label: r.label,
                    name: r.name.clone(),
                    group,
                    center_mm: r.centroid_mm + shift,
                    radius: region_sphere_radius(r, scale),
                    value,
                    color: encode_region_color(value),
                    highlighted: highlighted.contains(&r.label),
                });
            }
            for r in &selected_regions {
                for &id in &r.voxel_ids {
                    let (Some(v), Some(series)) = (atlas.voxel(id), set.series(id)) else { continue };
                    let vc = encode_voxel_color(series[t]);
                    voxels.push(VoxelCube { voxel_id: id, group, position_mm: v.position_mm + shift, color: vc.color, emissive: vc.emissive });
                    charts.push(Chart {
                        voxel_id: id,
                        region_label: r.label,
                        group,
                        anchor_mm: v.position_mm + shift,
                        series: series.to_vec(),
                        mean_color: encode_region_color(voxel_mean_over_time(set, id)?),
                    });
                }
            }
        }
        let polylines = self.polylines(state)?;
        let raster = match &state.slice {
            Some(plane) => Some(raster(atlas, &self.bio_norm, plane, t)?),
            None => None,
        };
        Ok(SceneSnapshot {
            session_id: state.session_id.clone(),
            dataset_id: state.dataset_id.clone(),
            time_index: t,
            time_ms: t as f64 * self.dataset.biological.dt_ms(),
            n_timepoints: self.dataset.biological.n_timepoints(),
            threshold_tau: state.threshold_tau,
            compare_mode: state.compare_mode,
            group_offset_mm: if state.compare_mode { self.group_offset_mm } else { 0.0 },
            spheres,
            polylines,
            voxels,
            charts,
            raster,
        })
    }

    /// Edges passing the threshold, limited to sources in selected regions
    /// when anything is selected.
    pub fn visible_edges(&self, state: &SessionState) -> EdgeSet {
        let atlas = &self.dataset.atlas;
        let kept = threshold_filter(&self.ranked, state.threshold_tau);
        if state.selected_regions.is_empty() {
            return kept;
        }
        kept.filter(|e| atlas.region_of(e.src).is_some_and(|l| state.selected_regions.contains(&l)))
    }

    fn polylines(&self, state: &SessionState) -> Result<Vec<ScenePolyline>> {
        let atlas = &self.dataset.atlas;
        let bundles: Option<&BundleDocument> = self.dataset.bundles.as_ref();
        let flag = !state.selected_regions.is_empty();
        self.visible_edges(state)
            .iter()
            .map(|e| {
                let bundled = bundles.and_then(|b| self.bundle_index.get(&(e.src, e.dst)).map(|&i| &b.edges[i]));
                let points = match bundled {
                    Some(b) => b.points.clone(),
                    None => {
                        let pos = |id| atlas.voxel(id).map(|v| v.position_mm).ok_or_else(|| Error::NotFound(format!("voxel {id}")));
                        vec![pos(e.src)?, pos(e.dst)?]
                    }
                };
                Ok(ScenePolyline {
                    src: e.src,
                    dst: e.dst,
                    weight: e.weight,
                    rank_pct: e.rank_pct,
                    bundled: bundled.is_some(),
                    flagged: flag,
                    color_stops: direction_gradient(e, points.len().max(2))?,
                    points,
                })
            })
            .collect()
    }
}

struct SessionEntry {
    state: SessionState,
    last_used: Instant,
}

/// Datasets plus live sessions. Sessions are isolated; mutations of one
/// session are serialized by the session table lock.
pub struct SceneService {
    datasets: BTreeMap<String, Arc<LoadedDataset>>,
    sessions: Mutex<HashMap<String, SessionEntry>>,
    idle_timeout: Duration,
}

/// Partial state update; `None` fields are left unchanged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub time_index: Option<usize>,
    pub threshold_tau: Option<f64>,
    pub compare_mode: Option<bool>,
    pub color_range_mode: Option<ColorRangeMode>,
}

impl SceneService {
    pub fn new(datasets: Vec<Dataset>) -> Result<SceneService> {
        let mut map = BTreeMap::new();
        for d in datasets {
            let id = d.name.clone();
            if map.insert(id.clone(), Arc::new(LoadedDataset::new(d)?)).is_some() {
                return Err(Error::Invalid(format!("duplicate dataset id {id:?}")));
            }
        }
        Ok(SceneService { datasets: map, sessions: Mutex::new(HashMap::new()), idle_timeout: DEFAULT_IDLE_TIMEOUT })
    }

    pub fn with_idle_timeout(mut self, timeout: Duration) -> SceneService {
        self.idle_timeout = timeout;
        self
    }

    pub fn datasets(&self) -> Vec<DatasetInfo> {
        self.datasets.values().map(|d| d.info()).collect()
    }

    pub fn dataset(&self, id: &str) -> Result<&Arc<LoadedDataset>> {
        self.datasets.get(id).ok_or_else(|| Error::NotFound(format!("dataset {id:?}")))
    }

    /// The dataset named `id`, or the only/first one when `id` is `None`.
    pub fn dataset_or_default(&self, id: Option<&str>) -> Result<&Arc<LoadedDataset>> {
        match id {
            Some(id) => self.dataset(id),
            None => self.datasets.values().next().ok_or_else(|| Error::NotFound("no datasets loaded".into())),
        }
    }

    fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut SessionState, &LoadedDataset) -> Result<T>) -> Result<T> {
        let mut sessions = self.sessions.lock().unwrap_or_else(|p| p.into_inner());
        let now = Instant::now();
        sessions.retain(|_, e| now.duration_since(e.last_used) < self.idle_timeout);
        let entry = sessions.get_mut(id).ok_or_else(|| Error::NotFound(format!("session {id:?}")))?;
        entry.last_used = now;
        let ds = self.dataset(&entry.state.dataset_id)?;
        // Apply to a copy so a failed mutation leaves the session untouched.
        let mut state = entry.state.clone();
        let out = f(&mut state, ds)?;
        entry.state = state;
        Ok(out)
    }

    pub fn open_session(&self, dataset_id: &str) -> Result<SessionState> {
        self.dataset(dataset_id)?;
        let id = uuid::Uuid::new_v4().to_string();
        let state = SessionState::fresh(id.clone(), dataset_id.to_string());
        let mut sessions = self.sessions.lock().unwrap_or_else(|p| p.into_inner());
        sessions.insert(id, SessionEntry { state: state.clone(), last_used: Instant::now() });
        Ok(state)
    }

    pub fn session(&self, id: &str) -> Result<SessionState> {
        self.with_session(id, |s, _| Ok(s.clone()))
    }

    pub fn session_count(&self) -> usize {
        let sessions = self.sessions.lock().unwrap_or_else(|p| p.into_inner());
        let now = Instant::now();
        sessions.values().filter(|e| now.duration_since(e.last_used) < self.idle_timeout).count()
    }

    pub fn update(&self, id: &str, u: &StateUpdate) -> Result<SessionState> {
        self.with_session(id, |s, ds| {
            if let Some(t) = u.time_index {
                let n = ds.dataset.biological.n_timepoints();
                if t >= n {
                    return Err(Error::Bounds { index: t, len: n });
                }
                s.time_index = t;
            }
            if let Some(tau) = u.threshold_tau {
                if !(0.0..=1.0).contains(&tau) {
                    return Err(Error::Invalid(format!("tau must lie in [0, 1], got {tau}")));
                }
                s.threshold_tau = tau;
            }
            if let Some(c) = u.compare_mode {
                s.compare_mode = c;
            }
            if let Some(m) = u.color_range_mode {
                s.color_range_mode = m;
            }
            Ok(s.clone())
        })
    }

    pub fn select_region(&self, id: &str, label: Label) -> Result<SessionState> {
        self.with_session(id, |s, ds| {
            ds.dataset.atlas.region_by_label(label)?;
            s.selected_regions.insert(label);
            if !s.visited_regions.contains(&label) {
                s.visited_regions.push(label);
            }
            Ok(s.clone())
        })
    }

    pub fn reset_navigation(&self, id: &str) -> Result<SessionState> {
        self.with_session(id, |s, _| {
            s.selected_regions.clear();
            Ok(s.clone())
        })
    }

    pub fn navigate_next(&self, id: &str, from: Label) -> Result<Vec<(Label, f64)>> {
        self.with_session(id, |_, ds| {
            ds.dataset.atlas.region_by_label(from)?;
            Ok(ds.adjacency.ranked_neighbors(from))
        })
    }

    pub fn set_slice(&self, id: &str, plane: Option<SlicePlane>) -> Result<SessionState> {
        self.with_session(id, |s, _| {
            s.slice = plane;
            Ok(s.clone())
        })
    }

    pub fn snapshot(&self, id: &str) -> Result<SceneSnapshot> {
        let (state, ds) = self.with_session(id, |s, _| Ok(s.clone())).and_then(|s| {
            let ds = Arc::clone(self.dataset(&s.dataset_id)?);
            Ok((s, ds))
        })?;
        ds.snapshot(&state)
    }

    pub fn slice(&self, dataset_id: Option<&str>, plane: &SlicePlane, t: usize) -> Result<SliceRaster> {
        let ds = self.dataset_or_default(dataset_id)?;
        raster(&ds.dataset.atlas, &ds.bio_norm, plane, t)
    }

    pub fn compare(&self, dataset_id: Option<&str>, scope: &CompareScope) -> Result<ComparisonReport> {
        let ds = self.dataset_or_default(dataset_id)?;
        compare_sets(&ds.dataset.biological, &ds.dataset.dtb, &ds.dataset.atlas, scope)
    }

    pub fn bundles(&self, dataset_id: Option<&str>) -> Result<Option<&BundleDocument>> {
        Ok(self.dataset_or_default(dataset_id)?.dataset.bundles.as_ref())
    }
}
