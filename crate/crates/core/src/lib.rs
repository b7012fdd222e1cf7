//! Brain-data exploration engine.
//!
//! The crate models a hierarchical brain atlas (region → voxel → slice),
//! per-voxel BOLD time series, a sparse DTI connectivity matrix, and a 3D
//! force-directed edge bundler, and assembles render-ready scene payloads
//! for an interactive explorer.
//!
//! Module map:
//!
//! - [`atlas`]: regions, voxels, species, functional subset, sphere sizing.
//! - [`signal`]: BOLD storage, normalization, color ramps, peak and lag analytics.
//! - [`connectome`]: global normalization, top-fraction, rank threshold, region aggregation.
//! - [`fdeb`]: 3D force-directed edge bundling and the bundled-edge JSON format.
//! - [`slicer`]: sagittal/horizontal/coronal slabs, rasters and PGM export.
//! - [`synth`]: seeded fixture generator (human and macaque presets).
//! - [`scene`]: session state, navigation and snapshot assembly.
//! - [`store`]: on-disk dataset directory layout.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aal;
pub mod atlas;
pub mod color;
pub mod connectome;
pub mod error;
pub mod fdeb;
pub mod fsutil;
pub mod geom;
pub mod scene;
pub mod signal;
pub mod slicer;
pub mod store;
pub mod synth;

pub use atlas::{Atlas, Region, Species, Voxel, VoxelId};
pub use color::ColorRGBA;
pub use connectome::{ConnectivityMatrix, Edge, EdgeSet, RegionAdjacency};
pub use error::{Error, Result};
pub use fdeb::{BundleParams, BundledEdge, Polyline};
pub use geom::Vec3;
pub use scene::{SceneService, SceneSnapshot, SessionState};
pub use signal::{ComparisonReport, SignalSet, SignalSource};
pub use slicer::{Axis, SlicePlane, SliceRaster};
pub use store::Dataset;
pub use synth::{GenSpec, Fixture};
