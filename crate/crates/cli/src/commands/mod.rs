//! Subcommand implementations.

pub mod ablate;
pub mod compare;
pub mod evaluate;
pub mod plan;
pub mod predict;
pub mod synth;
pub mod train;

use std::path::{Path, PathBuf};

use msdm_core::arch::ArchConfig;
use msdm_core::geo::{read_grb1, GeoRaster};

use crate::errors::AppError;

/// Load the raster behind each modality, in modality order, relabeling each
/// with its modality name and validating the band count.
pub fn load_rasters(data_dir: &Path, arch: &ArchConfig) -> Result<Vec<GeoRaster>, AppError> {
    let mut rasters = Vec::with_capacity(arch.modalities.len());
    for m in &arch.modalities {
        let path = data_dir.join(&m.raster);
        let mut raster = read_grb1(&path)?;
        if raster.bands != m.bands {
            return Err(AppError::data(format!(
                "modality '{}': raster {} has {} bands, config declares {}",
                m.name,
                path.display(),
                raster.bands,
                m.bands
            )));
        }
        if raster.band_stats().is_none() {
            raster.compute_band_stats()?;
        }
        raster.label = m.name.clone();
        rasters.push(raster);
    }
    Ok(rasters)
}

/// Dataset file paths inside a dataset directory.
pub fn dataset_files(data_dir: &Path, arch: &ArchConfig) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = arch
        .modalities
        .iter()
        .map(|m| data_dir.join(&m.raster))
        .collect();
    files.push(data_dir.join("po.csv"));
    files.push(data_dir.join("pa.csv"));
    files.push(data_dir.join("species.csv"));
    files
}
