//! Dataset directory layout.
//!
//! ```text
//! <dir>/atlas.json
//! <dir>/bold_biological.csv   (or .bin)
//! <dir>/bold_dtb.csv          (or .bin)
//! <dir>/dti.csv               (or .bin)
//! <dir>/manifest.json         optional
//! <dir>/bundles.json          optional
//! ```

use std::path::{Path, PathBuf};

use crate::atlas::{load_atlas, Atlas};
use crate::connectome::{load_dti, ConnectivityMatrix};
use crate::error::{Error, Result};
use crate::fdeb::{import_bundles, BundleDocument};
use crate::fsutil;
use crate::signal::{load_bold, SignalSet, SignalSource};
use crate::synth::Manifest;

pub const ATLAS_FILE: &str = "atlas.json";
pub const BIOLOGICAL_STEM: &str = "bold_biological";
pub const DTB_STEM: &str = "bold_dtb";
pub const DTI_STEM: &str = "dti";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BUNDLES_FILE: &str = "bundles.json";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub atlas: Atlas,
    pub biological: SignalSet,
    pub dtb: SignalSet,
    pub dti: ConnectivityMatrix,
    pub manifest: Option<Manifest>,
    pub bundles: Option<BundleDocument>,
}

fn pick(dir: &Path, stem: &str) -> Result<PathBuf> {
    for ext in ["csv", "bin"] {
        let p = dir.join(format!("{stem}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    let p = dir.join(format!("{stem}.csv"));
    Err(Error::io(&p, std::io::Error::new(std::io::ErrorKind::NotFound, "missing dataset file")))
}

impl Dataset {
    /// Loads and validates every artifact against the atlas. The dataset
    /// name is the directory's file name.
    pub fn load(dir: &Path) -> Result<Dataset> {
        if !dir.is_dir() {
            return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "not a dataset directory")));
        }
        let atlas = load_atlas(&dir.join(ATLAS_FILE))?;
        let biological = load_bold(&pick(dir, BIOLOGICAL_STEM)?, &atlas, SignalSource::Biological)?;
        let dtb = load_bold(&pick(dir, DTB_STEM)?, &atlas, SignalSource::Dtb)?;
        if biological.n_timepoints() != dtb.n_timepoints() {
            return Err(Error::Shape(format!(
                "biological and dtb series differ in length: {} vs {}",
                biological.n_timepoints(),
                dtb.n_timepoints()
            )));
        }
        let dti = load_dti(&pick(dir, DTI_STEM)?, &atlas)?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = if manifest_path.is_file() {
            let bytes = std::fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
            Some(serde_json::from_slice(&bytes).map_err(|e| Error::format(format!("manifest: {e}")))?)
        } else {
            None
        };
        let bundles_path = dir.join(BUNDLES_FILE);
        let bundles = if bundles_path.is_file() { Some(import_bundles(&bundles_path)?) } else { None };
        let name = dir
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "dataset".into());
        Ok(Dataset { name, atlas, biological, dtb, dti, manifest, bundles })
    }

    /// Writes the layout (CSV variants) into `dir`, replacing it atomically.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fsutil::write_dir_atomic(dir, |d| {
            self.atlas.save(&d.join(ATLAS_FILE))?;
            self.biological.save_csv(&d.join(format!("{BIOLOGICAL_STEM}.csv")))?;
            self.dtb.save_csv(&d.join(format!("{DTB_STEM}.csv")))?;
            self.dti.save_csv(&d.join(format!("{DTI_STEM}.csv")))?;
            if let Some(m) = &self.manifest {
                let mut bytes = serde_json::to_vec_pretty(m)?;
                bytes.push(b'\n');
                fsutil::write_atomic(&d.join(MANIFEST_FILE), &bytes)?;
            }
            if let Some(b) = &self.bundles {
                crate::fdeb::export_bundles(&b.edges, &b.params, &d.join(BUNDLES_FILE))?;
            }
            Ok(())
        })
    }
}
