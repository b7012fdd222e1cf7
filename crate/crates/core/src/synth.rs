//! Seeded fixture generator.
//!
//! PRNG: xoshiro256++ seeded through SplitMix64 (`seed_from_u64`). Each
//! artifact draws from its own stream, seeded with `seed` mixed with a fixed
//! per-stream constant, so changing the DTI count does not perturb the
//! atlas or signals.
//!
//! Signal model per region `r`, time `t`:
//!
//! ```text
//! x_r(t) = g(t) + a_r·sin(2πt/P_r + φ_r) + burst_r(t)
//! g(t)   = A_g·sin(2πt/P_g + φ_g)                    shared slow component
//! burst  = global_amplitude·exp(−(t−t₀)²/2W²) in every region,
//!          plus amplitude·exp(−(t−t₀)²/2w²) in the burst region
//! ```
//!
//! Each voxel adds Gaussian noise. The dtb series is `gain · x(t − lag)`,
//! evaluated over `T + lag` samples so the shift has no padding.

use std::collections::HashSet;
use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::aal;
use crate::atlas::{Atlas, Label, RegionSpec, Species, Voxel, VoxelId};
use crate::connectome::{ConnectivityMatrix, Entry};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::signal::{SignalSet, SignalSource, DEFAULT_DT_MS, DEFAULT_TIMEPOINTS};
use crate::store::Dataset;

/// Human-scale DTI entry count (its top 10% is 38,036 edges).
pub const HUMAN_DTI_ENTRIES: usize = 380_360;
pub const F1_SEED: u64 = 42;
pub const F1_BURST_TIME: usize = 119;
pub const F1_BURST_REGION: Label = 35;

const STREAM_ATLAS: u64 = 0x6174_6c61_7300_0001;
const STREAM_SIGNAL: u64 = 0x7369_676e_616c_0002;
const STREAM_DTI: u64 = 0x6474_6900_0000_0003;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub region_label: Label,
    pub time_index: usize,
    pub amplitude: f64,
    /// Gaussian width (samples) of the region burst.
    pub width: f64,
    /// Broader burst shared by every region, centred on the same time.
    pub global_amplitude: f64,
    pub global_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub seed: u64,
    pub species: Species,
    pub n_regions: usize,
    /// Inclusive range.
    pub voxels_per_region: (usize, usize),
    pub spacing_mm: f64,
    pub n_timepoints: usize,
    pub dt_ms: f64,
    pub burst: Option<Burst>,
    pub dti_edge_count: usize,
    pub lag: usize,
    pub gain: f64,
    pub noise_sd: f64,
    /// Amplitude of the shared slow component.
    pub drift_amplitude: f64,
    /// Brain ellipsoid semi-axes (mm).
    pub brain_radii_mm: [f64; 3],
}

impl GenSpec {
    pub fn human(seed: u64) -> GenSpec {
        GenSpec {
            seed,
            species: Species::Human,
            n_regions: aal::N_LABELS,
            voxels_per_region: (6, 10),
            spacing_mm: 2.0,
            n_timepoints: DEFAULT_TIMEPOINTS,
            dt_ms: DEFAULT_DT_MS,
            burst: None,
            dti_edge_count: HUMAN_DTI_ENTRIES,
            lag: 3,
            gain: 0.8,
            noise_sd: 0.15,
            drift_amplitude: 0.2,
            brain_radii_mm: [68.0, 86.0, 60.0],
        }
    }

    pub fn macaque(seed: u64) -> GenSpec {
        GenSpec {
            seed,
            species: Species::Macaque,
            n_regions: 40,
            voxels_per_region: (4, 8),
            spacing_mm: 1.0,
            n_timepoints: DEFAULT_TIMEPOINTS,
            dt_ms: DEFAULT_DT_MS,
            burst: None,
            dti_edge_count: 20_000,
            lag: 3,
            gain: 0.8,
            noise_sd: 0.15,
            drift_amplitude: 0.2,
            brain_radii_mm: [28.0, 38.0, 24.0],
        }
    }

    /// The standard fixture: human preset, seed 42, burst at t = 119 in the
    /// left hippocampus.
    pub fn f1() -> GenSpec {
        GenSpec {
            burst: Some(Burst {
                region_label: F1_BURST_REGION,
                time_index: F1_BURST_TIME,
                amplitude: 2.0,
                width: 2.0,
                global_amplitude: 3.0,
                global_width: 8.0,
            }),
            ..GenSpec::human(F1_SEED)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        let (lo, hi) = self.voxels_per_region;
        if self.n_regions == 0 || lo == 0 || hi < lo {
            return bad(format!("need n_regions ≥ 1 and 1 ≤ min ≤ max voxels per region, got {} and {lo}..={hi}", self.n_regions));
        }
        if self.n_timepoints == 0 || !(self.dt_ms > 0.0) || !(self.spacing_mm > 0.0) {
            return bad("n_timepoints, dt_ms and spacing_mm must be positive".into());
        }
        if self.dti_edge_count == 0 {
            return bad("dti_edge_count must be positive".into());
        }
        let min_voxels = self.n_regions * lo;
        if self.dti_edge_count > min_voxels * (min_voxels - 1) && self.dti_edge_count > self.n_regions * hi * (self.n_regions * hi - 1) {
            return bad(format!(
                "{} DTI entries cannot fit among at most {} voxels",
                self.dti_edge_count,
                self.n_regions * hi
            ));
        }
        if let Some(b) = &self.burst {
            if b.time_index >= self.n_timepoints {
                return bad(format!("burst time {} outside 0..{}", b.time_index, self.n_timepoints));
            }
            if b.region_label == 0 || b.region_label as usize > self.n_regions {
                return bad(format!("burst region {} outside 1..={}", b.region_label, self.n_regions));
            }
        }
        if !self.gain.is_finite() || !(self.noise_sd >= 0.0) {
            return bad("gain must be finite and noise_sd non-negative".into());
        }
        if self.brain_radii_mm.iter().any(|r| !(*r > 0.0)) {
            return bad("brain radii must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub species: Species,
    pub n_regions: usize,
    pub n_functional_regions: usize,
    pub n_voxels: usize,
    pub n_timepoints: usize,
    pub dt_ms: f64,
    pub dti_edge_count: usize,
    pub lag: usize,
    pub gain: f64,
    pub burst: Option<Burst>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub atlas: Atlas,
    pub biological: SignalSet,
    pub dtb: SignalSet,
    pub dti: ConnectivityMatrix,
    pub manifest: Manifest,
}

impl Fixture {
    pub fn into_dataset(self, name: impl Into<String>) -> Dataset {
        Dataset {
            name: name.into(),
            atlas: self.atlas,
            biological: self.biological,
            dtb: self.dtb,
            dti: self.dti,
            manifest: Some(self.manifest),
            bundles: None,
        }
    }

    /// Writes the dataset directory layout to `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.clone().into_dataset("fixture").save(dir)
    }
}

fn stream(seed: u64, salt: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed ^ salt)
}

pub fn gen_fixture(spec: &GenSpec) -> Result<Fixture> {
    spec.validate()?;
    let atlas = gen_atlas(spec)?;
    let (biological, dtb) = gen_signals(spec, &atlas)?;
    let dti = gen_dti(spec, &atlas)?;
    let manifest = Manifest {
        seed: spec.seed,
        species: spec.species.clone(),
        n_regions: atlas.regions().len(),
        n_functional_regions: atlas.functional_regions().len(),
        n_voxels: atlas.voxel_count(),
        n_timepoints: spec.n_timepoints,
        dt_ms: spec.dt_ms,
        dti_edge_count: dti.len(),
        lag: spec.lag,
        gain: spec.gain,
        burst: spec.burst.clone(),
    };
    Ok(Fixture { atlas, biological, dtb, dti, manifest })
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Left,
    Right,
    Midline,
}

fn region_specs(spec: &GenSpec) -> Vec<(RegionSpec, Side, bool)> {
    let human = matches!(spec.species, Species::Human);
    (1..=spec.n_regions as Label)
        .map(|label| {
            let (name, functional) = match (human, aal::name(label)) {
                (true, Some(n)) => (n.to_string(), aal::is_functional(label)),
                _ => {
                    let side = if label % 2 == 1 { "L" } else { "R" };
                    (format!("Region_{:02}_{side}", label.div_ceil(2)), true)
                }
            };
            let side = if name.ends_with("_L") {
                Side::Left
            } else if name.ends_with("_R") {
                Side::Right
            } else {
                Side::Midline
            };
            let hindbrain = name.starts_with("Cerebelum") || name.starts_with("Vermis");
            (RegionSpec { label, name, functional }, side, hindbrain)
        })
        .collect()
}

fn in_unit_ball(rng: &mut Xoshiro256PlusPlus) -> Vec3 {
    loop {
        let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if p.norm_sq() <= 1.0 {
            return p;
        }
    }
}

fn gen_atlas(spec: &GenSpec) -> Result<Atlas> {
    let mut rng = stream(spec.seed, STREAM_ATLAS);
    let [rx, ry, rz] = spec.brain_radii_mm;
    let h = spec.spacing_mm;
    let mut taken: HashSet<[i64; 3]> = HashSet::new();
    let mut regions = Vec::new();
    let mut voxels = Vec::new();
    let mut next_id: VoxelId = 0;
    for (rs, side, hindbrain) in region_specs(spec) {
        let u = in_unit_ball(&mut rng);
        let mut centre = Vec3::new(u.x * rx * 0.8, u.y * ry * 0.8, u.z * rz * 0.8);
        centre.x = match side {
            Side::Left => -centre.x.abs().max(0.1 * rx),
            Side::Right => centre.x.abs().max(0.1 * rx),
            Side::Midline => centre.x * 0.1,
        };
        if hindbrain {
            centre.y = -ry * (0.55 + 0.3 * u.y.abs());
            centre.z = -rz * (0.45 + 0.3 * u.z.abs());
        } else {
            centre.z = centre.z.abs() * 0.9 - 0.1 * rz;
        }
        let n = rng.random_range(spec.voxels_per_region.0..=spec.voxels_per_region.1);
        let radius = h * (n as f64).cbrt() * 1.5;
        let shape = Vec3::new(rng.random_range(0.7..1.3), rng.random_range(0.7..1.3), rng.random_range(0.7..1.3));
        let mut placed = 0;
        let mut tries = 0usize;
        while placed < n {
            tries += 1;
            // Grow the cluster if the lattice around the centre is crowded.
            let grow = 1.0 + (tries / (50 * n)) as f64 * 0.5;
            let p = in_unit_ball(&mut rng);
            let q = Vec3::new(
                centre.x + p.x * radius * shape.x * grow,
                centre.y + p.y * radius * shape.y * grow,
                centre.z + p.z * radius * shape.z * grow,
            );
            let cell = [(q.x / h).round() as i64, (q.y / h).round() as i64, (q.z / h).round() as i64];
            if !taken.insert(cell) {
                continue;
            }
            let pos = Vec3::new(cell[0] as f64 * h, cell[1] as f64 * h, cell[2] as f64 * h);
            voxels.push(Voxel { id: next_id, position_mm: pos, region_label: rs.label });
            next_id += 1;
            placed += 1;
        }
        regions.push(rs);
    }
    Atlas::new(spec.species.clone(), h, regions, voxels)
}

fn gaussian(d: f64, width: f64) -> f64 {
    (-d * d / (2.0 * width * width)).exp()
}

fn gen_signals(spec: &GenSpec, atlas: &Atlas) -> Result<(SignalSet, SignalSet)> {
    let mut rng = stream(spec.seed, STREAM_SIGNAL);
    let total = spec.n_timepoints + spec.lag;
    // Sample s of the extended series is time s − lag.
    let time = |s: usize| s as f64 - spec.lag as f64;
    let g_period = rng.random_range(100.0..160.0);
    let g_phase = rng.random_range(0.0..TAU);
    let g_amp = spec.drift_amplitude;
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut bio = std::collections::BTreeMap::new();
    let mut dtb = std::collections::BTreeMap::new();
    for region in atlas.regions() {
        let amp = rng.random_range(0.1..0.3);
        let period = rng.random_range(20.0..60.0);
        let phase = rng.random_range(0.0..TAU);
        let latent: Vec<f64> = (0..total)
            .map(|s| {
                let t = time(s);
                let mut x = g_amp * (TAU * t / g_period + g_phase).sin() + amp * (TAU * t / period + phase).sin();
                if let Some(b) = &spec.burst {
                    let d = t - b.time_index as f64;
                    x += b.global_amplitude * gaussian(d, b.global_width);
                    if b.region_label == region.label {
                        x += b.amplitude * gaussian(d, b.width);
                    }
                }
                x
            })
            .collect();
        for &id in &region.voxel_ids {
            let ext: Vec<f64> = latent.iter().map(|x| x + noise.sample(&mut rng)).collect();
            bio.insert(id, ext[spec.lag..].to_vec());
            dtb.insert(id, ext[..spec.n_timepoints].iter().map(|x| spec.gain * x).collect());
        }
    }
    Ok((
        SignalSet::new(SignalSource::Biological, spec.dt_ms, spec.n_timepoints, bio)?,
        SignalSet::new(SignalSource::Dtb, spec.dt_ms, spec.n_timepoints, dtb)?,
    ))
}

fn gen_dti(spec: &GenSpec, atlas: &Atlas) -> Result<ConnectivityMatrix> {
    let mut rng = stream(spec.seed, STREAM_DTI);
    let voxels: Vec<&Voxel> = atlas.voxels().collect();
    let n = voxels.len();
    let universe = n * n.saturating_sub(1);
    let want = spec.dti_edge_count;
    if want > universe {
        return Err(Error::Invalid(format!("{want} DTI entries cannot fit among {n} voxels ({universe} ordered pairs)")));
    }
    let pairs: Vec<(usize, usize)> = if want * 2 <= universe {
        let mut seen = HashSet::with_capacity(want);
        let mut out = Vec::with_capacity(want);
        while out.len() < want {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b && seen.insert((a, b)) {
                out.push((a, b));
            }
        }
        out
    } else {
        let mut all: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b))).collect();
        for i in 0..want {
            let j = rng.random_range(i..all.len());
            all.swap(i, j);
        }
        all.truncate(want);
        all
    };
    let decay = spec.brain_radii_mm.iter().sum::<f64>() / 6.0;
    let entries = pairs
        .into_iter()
        .map(|(a, b)| {
            let d = voxels[a].position_mm.distance(voxels[b].position_mm);
            let w = (-d / decay).exp() * rng.random_range(0.5..1.5);
            Entry { src: voxels[a].id, dst: voxels[b].id, weight: w }
        })
        .collect();
    ConnectivityMatrix::new(n as u32, entries)
}
