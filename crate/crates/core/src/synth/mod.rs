//! Synthetic worlds and virtual species for controlled scale-recovery
//! experiments: a coarse "bioclim-like" raster stack and a co-registered
//! fine "satellite-like" stack, plus species whose suitability depends on
//! one band averaged over a species-specific window.

mod dataset;
mod sample;
mod species;
mod world;

pub use dataset::{write_dataset, DatasetSummary};
pub use sample::{quadrant_chi2, sample_occurrences, SampleOutput};
pub use species::{logistic, resolve_species, suitability, ResolvedSpecies};
pub use world::{gen_world, World};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoError;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("synthesis config error: {0}")]
    Config(String),
    #[error("calibration failed for species '{id}': {reason}")]
    Calibration { id: String, reason: String },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn default_pixel_world() -> f64 {
    0.0
}
fn default_bias_blur() -> f64 {
    12.0
}
fn default_bias_ratio() -> f64 {
    3.0
}
fn default_date_pool() -> usize {
    12
}
fn default_alpha_mode() -> String {
    "per_feature_std".into()
}
fn default_gain() -> f64 {
    0.0
}

/// One synthetic raster stack. `pixel_world` is the geometric pixel size in
/// world units; for the fine stack it may be omitted and is derived from
/// co-registration with the coarse extent. `ground_km` is the nominal ground
/// pixel size used for footprint tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RasterSpec {
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    #[serde(default = "default_pixel_world")]
    pub pixel_world: f64,
    pub ground_km: f64,
    /// Per-band Gaussian blur radius (sigma, in pixels); 0 leaves white noise.
    pub blur: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_po: usize,
    pub n_pa: usize,
    /// Blur radius (coarse pixels) of the low-frequency PO bias field.
    #[serde(default = "default_bias_blur")]
    pub po_bias_blur: f64,
    /// Max/min PO sampling density ratio; 1 makes sampling uniform.
    #[serde(default = "default_bias_ratio")]
    pub po_bias_ratio: f64,
    #[serde(default = "default_date_pool")]
    pub date_pool: usize,
    /// Interior inset, in pixels per modality, applied to PO proposals and
    /// the PA grid; defaults to each modality's largest species window.
    #[serde(default)]
    pub inset_px_coarse: Option<usize>,
    #[serde(default)]
    pub inset_px_fine: Option<usize>,
}

/// A virtual species: suitability is `logistic(alpha * direction * m + beta)`
/// where `m` is the mean of one band over a `window`-sized square centered at
/// the site. `beta` is always calibrated to the prevalence target; `alpha`
/// is taken as-is (`alpha_mode = "absolute"`) or divided by the sampled
/// standard deviation of the window-mean feature (`"per_feature_std"`, the
/// default) so `gain` expresses steepness in feature sigmas.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeciesConfig {
    pub id: String,
    /// "coarse" or "fine".
    pub modality: String,
    pub band: usize,
    pub window: usize,
    /// +1: suitability rises with the feature; -1: falls.
    pub direction: i8,
    #[serde(default = "default_gain")]
    pub alpha: f64,
    #[serde(default = "default_alpha_mode")]
    pub alpha_mode: String,
    pub prevalence: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub coarse: RasterSpec,
    pub fine: RasterSpec,
    pub sampling: SamplingConfig,
    #[serde(rename = "species")]
    pub species: Vec<SpeciesConfig>,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, spec) in [("coarse", &self.coarse), ("fine", &self.fine)] {
            if spec.bands == 0 || spec.height == 0 || spec.width == 0 {
                return Err(SynthError::Config(format!("{name}: empty raster spec")));
            }
            if spec.blur.len() != spec.bands {
                return Err(SynthError::Config(format!(
                    "{name}: {} blur radii for {} bands",
                    spec.blur.len(),
                    spec.bands
                )));
            }
            if spec.blur.iter().any(|&b| b < 0.0) {
                return Err(SynthError::Config(format!("{name}: blur radius < 0")));
            }
        }
        if self.coarse.pixel_world <= 0.0 {
            return Err(SynthError::Config("coarse.pixel_world must be > 0".into()));
        }
        if self.species.is_empty() {
            return Err(SynthError::Config("at least one species is required".into()));
        }
        for sp in &self.species {
            if sp.window % 2 == 0 {
                return Err(SynthError::Config(format!(
                    "species '{}': window must be odd",
                    sp.id
                )));
            }
            if !(0.0 < sp.prevalence && sp.prevalence < 1.0) {
                return Err(SynthError::Config(format!(
                    "species '{}': prevalence must be in (0, 1)",
                    sp.id
                )));
            }
            if sp.direction != 1 && sp.direction != -1 {
                return Err(SynthError::Config(format!(
                    "species '{}': direction must be +1 or -1",
                    sp.id
                )));
            }
            let spec = match sp.modality.as_str() {
                "coarse" => &self.coarse,
                "fine" => &self.fine,
                other => {
                    return Err(SynthError::Config(format!(
                        "species '{}': unknown modality '{other}'",
                        sp.id
                    )))
                }
            };
            if sp.band >= spec.bands {
                return Err(SynthError::Config(format!(
                    "species '{}': band {} out of range",
                    sp.id, sp.band
                )));
            }
            match sp.alpha_mode.as_str() {
                "absolute" | "per_feature_std" => {}
                other => {
                    return Err(SynthError::Config(format!(
                        "species '{}': unknown alpha_mode '{other}'",
                        sp.id
                    )))
                }
            }
        }
        if self.sampling.n_po == 0 || self.sampling.n_pa == 0 {
            return Err(SynthError::Config("n_po and n_pa must be >= 1".into()));
        }
        if self.sampling.po_bias_ratio < 1.0 {
            return Err(SynthError::Config("po_bias_ratio must be >= 1".into()));
        }
        Ok(())
    }
}
