//! Hierarchical brain structure: labeled regions owning positioned voxels.
//!
//! Coordinates are RAS-like millimetres: x runs left → right, y posterior →
//! anterior, z inferior → superior.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::geom::Vec3;

pub type VoxelId = u32;
pub type Label = u32;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Species {
    Human,
    Macaque,
    Other(String),
}

impl Species {
    pub fn as_str(&self) -> &str {
        match self {
            Species::Human => "human",
            Species::Macaque => "macaque",
            Species::Other(s) => s,
        }
    }
}

impl From<&str> for Species {
    fn from(s: &str) -> Self {
        match s {
            "human" => Species::Human,
            "macaque" => Species::Macaque,
            other => Species::Other(other.to_string()),
        }
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Species {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Species {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Species::from(s.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voxel {
    pub id: VoxelId,
    pub position_mm: Vec3,
    pub region_label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub label: Label,
    pub name: String,
    pub voxel_ids: Vec<VoxelId>,
    pub centroid_mm: Vec3,
    /// False for cerebellar regions.
    pub functional: bool,
}

impl Region {
    pub fn voxel_count(&self) -> usize {
        self.voxel_ids.len()
    }
}

/// Region metadata without voxels, used to build an [`Atlas`] from parts.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub label: Label,
    pub name: String,
    pub functional: bool,
}

/// Validated atlas. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Atlas {
    species: Species,
    spacing_mm: f64,
    regions: Vec<Region>,
    region_pos: BTreeMap<Label, usize>,
    voxel_index: BTreeMap<VoxelId, Voxel>,
}

impl Atlas {
    /// Builds and validates an atlas from region metadata and a flat voxel list.
    ///
    /// Regions are stored in label order; each region's voxel ids are kept in
    /// the order the voxels were supplied.
    pub fn new(
        species: Species,
        spacing_mm: f64,
        regions: Vec<RegionSpec>,
        voxels: Vec<Voxel>,
    ) -> Result<Atlas> {
        if !(spacing_mm > 0.0 && spacing_mm.is_finite()) {
            return Err(Error::format(format!("spacing_mm must be positive, got {spacing_mm}")));
        }
        if regions.is_empty() {
            return Err(Error::format("atlas has no regions"));
        }
        let mut specs: BTreeMap<Label, RegionSpec> = BTreeMap::new();
        for r in regions {
            if r.label == 0 {
                return Err(Error::format("region label 0 is not a positive integer"));
            }
            if specs.contains_key(&r.label) {
                return Err(Error::format(format!("duplicate region label {}", r.label)));
            }
            specs.insert(r.label, r);
        }

        let mut members: BTreeMap<Label, Vec<VoxelId>> = specs.keys().map(|&l| (l, Vec::new())).collect();
        let mut voxel_index = BTreeMap::new();
        for v in voxels {
            if !v.position_mm.is_finite() {
                return Err(Error::format(format!("voxel {} has a non-finite position", v.id)));
            }
            let Some(list) = members.get_mut(&v.region_label) else {
                return Err(Error::format(format!(
                    "voxel {} references missing region {}",
                    v.id, v.region_label
                )));
            };
            if let Some(prev) = voxel_index.insert(v.id, v) {
                return Err(Error::format(format!(
                    "voxel {} listed in regions {} and {}",
                    v.id, prev.region_label, v.region_label
                )));
            }
            list.push(v.id);
        }

        let mut out = Vec::with_capacity(specs.len());
        let mut region_pos = BTreeMap::new();
        for (label, spec) in specs {
            let voxel_ids = members.remove(&label).unwrap_or_default();
            let centroid_mm = centroid(voxel_ids.iter().map(|id| voxel_index[id].position_mm));
            region_pos.insert(label, out.len());
            out.push(Region {
                label,
                name: spec.name,
                voxel_ids,
                centroid_mm,
                functional: spec.functional,
            });
        }

        Ok(Atlas { species, spacing_mm, regions: out, region_pos, voxel_index })
    }

    pub fn species(&self) -> &Species {
        &self.species
    }

    pub fn spacing_mm(&self) -> f64 {
        self.spacing_mm
    }

    /// All regions in label order.
    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn voxels(&self) -> impl ExactSizeIterator<Item = &Voxel> + '_ {
        self.voxel_index.values()
    }

    pub fn voxel_count(&self) -> usize {
        self.voxel_index.len()
    }

    pub fn voxel(&self, id: VoxelId) -> Option<&Voxel> {
        self.voxel_index.get(&id)
    }

    pub fn contains_voxel(&self, id: VoxelId) -> bool {
        self.voxel_index.contains_key(&id)
    }

    pub fn region(&self, label: Label) -> Option<&Region> {
        self.region_pos.get(&label).map(|&i| &self.regions[i])
    }

    pub fn region_by_label(&self, label: Label) -> Result<&Region> {
        self.region(label).ok_or_else(|| Error::NotFound(format!("region {label}")))
    }

    /// Region label owning a voxel.
    pub fn region_of(&self, id: VoxelId) -> Option<Label> {
        self.voxel_index.get(&id).map(|v| v.region_label)
    }

    pub fn labels(&self) -> BTreeSet<Label> {
        self.region_pos.keys().copied().collect()
    }

    /// Regions with `functional = true`, in label order.
    pub fn functional_regions(&self) -> Vec<&Region> {
        self.regions.iter().filter(|r| r.functional).collect()
    }

    /// Axis-aligned bounds of all voxel positions, or `None` for a voxel-less atlas.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.voxel_index.values().map(|v| v.position_mm);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| {
            (
                Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
                Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
            )
        }))
    }

    pub fn to_document(&self) -> AtlasDocument {
        AtlasDocument {
            species: self.species.clone(),
            spacing_mm: self.spacing_mm,
            regions: self
                .regions
                .iter()
                .map(|r| RegionDocument {
                    label: r.label,
                    name: r.name.clone(),
                    functional: r.functional,
                    voxels: r
                        .voxel_ids
                        .iter()
                        .map(|id| VoxelDocument { id: *id, pos: self.voxel_index[id].position_mm.to_array() })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: AtlasDocument) -> Result<Atlas> {
        let mut specs = Vec::with_capacity(doc.regions.len());
        let mut voxels = Vec::new();
        for r in doc.regions {
            for v in r.voxels {
                voxels.push(Voxel { id: v.id, position_mm: v.pos.into(), region_label: r.label });
            }
            specs.push(RegionSpec { label: r.label, name: r.name, functional: r.functional });
        }
        Atlas::new(doc.species, doc.spacing_mm, specs, voxels)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut buf = serde_json::to_vec_pretty(&self.to_document())?;
        buf.push(b'\n');
        Ok(buf)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Atlas> {
        let doc: AtlasDocument = serde_json::from_slice(bytes).map_err(|e| Error::format(format!("atlas: {e}")))?;
        Atlas::from_document(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_json()?)
    }
}

/// Loads and validates an atlas file.
pub fn load_atlas(path: &Path) -> Result<Atlas> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Atlas::from_json(&bytes)
}

/// Radius of a sphere whose volume is proportional to the region's voxel count.
pub fn region_sphere_radius(region: &Region, scale: f64) -> f64 {
    scale * (region.voxel_count() as f64).cbrt()
}

fn centroid(points: impl Iterator<Item = Vec3>) -> Vec3 {
    let mut sum = Vec3::ZERO;
    let mut n = 0usize;
    for p in points {
        sum += p;
        n += 1;
    }
    if n == 0 {
        Vec3::ZERO
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtlasDocument {
    pub species: Species,
    pub spacing_mm: f64,
    pub regions: Vec<RegionDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionDocument {
    pub label: Label,
    pub name: String,
    pub functional: bool,
    pub voxels: Vec<VoxelDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoxelDocument {
    pub id: VoxelId,
    pub pos: [f64; 3],
}
