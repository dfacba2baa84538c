//! Virtual species: window-mean suitability and prevalence calibration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SpeciesConfig, SynthError, World};
use crate::geo::{GeoError, GeoRaster};

const CALIBRATION_SITES: usize = 1000;
pub(crate) const PREVALENCE_TOL: f64 = 0.02;

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A species with its calibrated response: `alpha` resolved from the config
/// (possibly per feature sigma) and `beta` bisected to the prevalence target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedSpecies {
    pub id: String,
    pub modality: String,
    pub band: usize,
    pub window: usize,
    pub direction: i8,
    pub alpha: f64,
    pub beta: f64,
    pub prevalence_target: f64,
    /// Mean suitability over the calibration sample after bisection.
    pub calibrated_prevalence: f64,
    /// Sampled standard deviation of the window-mean feature.
    pub feature_std: f64,
}

/// Mean of the species' band over its window centered at the pixel
/// containing the site. The whole window must be in bounds.
fn window_mean(raster: &GeoRaster, band: usize, window: usize, lon: f64, lat: f64) -> Result<f64, GeoError> {
    let (row, col) = raster.world_to_pixel(lon, lat)?;
    let half = (window - 1) / 2;
    if row < half || col < half || row + half >= raster.height || col + half >= raster.width {
        return Err(GeoError::OutOfBounds {
            lon,
            lat,
            detail: format!(" (suitability window {window}x{window})"),
        });
    }
    let plane = raster.band(band);
    let mut sum = 0.0f64;
    for r in row - half..=row + half {
        let base = r * raster.width + (col - half);
        for &v in &plane[base..base + window] {
            sum += v as f64;
        }
    }
    Ok(sum / (window * window) as f64)
}

/// Suitability of a resolved species at a site:
/// `logistic(alpha * direction * window_mean + beta)`.
pub fn suitability(world: &World, sp: &ResolvedSpecies, lon: f64, lat: f64) -> Result<f64, GeoError> {
    let raster = world.raster(&sp.modality);
    let m = window_mean(raster, sp.band, sp.window, lon, lat)?;
    Ok(logistic(sp.alpha * sp.direction as f64 * m + sp.beta))
}

/// Uniform calibration sites in the interior where every window fits.
fn calibration_sites(raster: &GeoRaster, window: usize, seed: u64, n: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xca11_b0a7);
    let t = &raster.transform;
    let half = (window - 1) / 2 + 1;
    let x_lo = t.origin_x + half as f64 * t.pixel_size_x;
    let x_hi = t.origin_x + (raster.width - half) as f64 * t.pixel_size_x;
    let y_hi = t.origin_y - half as f64 * t.pixel_size_y;
    let y_lo = t.origin_y - (raster.height - half) as f64 * t.pixel_size_y;
    (0..n)
        .map(|_| {
            (
                x_lo + rng.random::<f64>() * (x_hi - x_lo),
                y_lo + rng.random::<f64>() * (y_hi - y_lo),
            )
        })
        .collect()
}

/// Resolve every species: compute the feature standard deviation on a
/// seeded site sample, scale alpha if requested, and bisect beta until the
/// sample-mean suitability hits the prevalence target.
pub fn resolve_species(
    world: &World,
    configs: &[SpeciesConfig],
    seed: u64,
) -> Result<Vec<ResolvedSpecies>, SynthError> {
    let mut out = Vec::with_capacity(configs.len());
    for (si, cfg) in configs.iter().enumerate() {
        let raster = world.raster(&cfg.modality);
        let sites = calibration_sites(raster, cfg.window, seed.wrapping_add(si as u64), CALIBRATION_SITES);
        let features: Vec<f64> = sites
            .iter()
            .map(|&(lon, lat)| window_mean(raster, cfg.band, cfg.window, lon, lat))
            .collect::<Result<_, _>>()?;
        let n = features.len() as f64;
        let mean = features.iter().sum::<f64>() / n;
        let var = features.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / n;
        let feature_std = var.sqrt();
        if feature_std <= 0.0 {
            return Err(SynthError::Calibration {
                id: cfg.id.clone(),
                reason: "window-mean feature has zero variance".into(),
            });
        }
        let alpha = match cfg.alpha_mode.as_str() {
            "absolute" => cfg.alpha,
            _ => cfg.alpha / feature_std,
        };

        // Mean suitability is monotone increasing in beta: bisect.
        let signed: Vec<f64> = features
            .iter()
            .map(|&f| alpha * cfg.direction as f64 * f)
            .collect();
        let mean_suit = |beta: f64| signed.iter().map(|&z| logistic(z + beta)).sum::<f64>() / n;
        let (mut lo, mut hi) = (-60.0f64, 60.0f64);
        if mean_suit(lo) > cfg.prevalence || mean_suit(hi) < cfg.prevalence {
            return Err(SynthError::Calibration {
                id: cfg.id.clone(),
                reason: format!("prevalence {} outside the bisection range", cfg.prevalence),
            });
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_suit(mid) < cfg.prevalence {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let beta = 0.5 * (lo + hi);
        let calibrated = mean_suit(beta);
        if (calibrated - cfg.prevalence).abs() > PREVALENCE_TOL {
            return Err(SynthError::Calibration {
                id: cfg.id.clone(),
                reason: format!(
                    "bisection reached {calibrated:.4}, target {}",
                    cfg.prevalence
                ),
            });
        }
        out.push(ResolvedSpecies {
            id: cfg.id.clone(),
            modality: cfg.modality.clone(),
            band: cfg.band,
            window: cfg.window,
            direction: cfg.direction,
            alpha,
            beta,
            prevalence_target: cfg.prevalence,
            calibrated_prevalence: calibrated,
            feature_std,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::world::tests::test_config;
    use crate::synth::{gen_world, SpeciesConfig};

    fn world() -> World {
        gen_world(&test_config(42, vec![1.0, 0.0])).unwrap()
    }

    fn spec(window: usize, alpha: f64, mode: &str, prevalence: f64) -> SpeciesConfig {
        SpeciesConfig {
            id: "s".into(),
            modality: "coarse".into(),
            band: 0,
            window,
            direction: 1,
            alpha,
            alpha_mode: mode.into(),
            prevalence,
        }
    }

    #[test]
    fn zero_alpha_is_flat_logistic_beta() {
        let w = world();
        let resolved = resolve_species(&w, &[spec(3, 0.0, "absolute", 0.4)], 1).unwrap();
        let sp = &resolved[0];
        assert!((logistic(sp.beta) - 0.4).abs() < 0.02);
        let a = suitability(&w, sp, 10.0, 10.0).unwrap();
        let b = suitability(&w, sp, 50.0, 50.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn window_one_depends_only_on_center_pixel() {
        let w = world();
        let resolved = resolve_species(&w, &[spec(1, 3.0, "per_feature_std", 0.3)], 2).unwrap();
        let sp = &resolved[0];
        // Two coordinates inside the same pixel give the same suitability.
        let a = suitability(&w, sp, 10.2, 10.2).unwrap();
        let b = suitability(&w, sp, 10.8, 10.7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bisection_hits_prevalence_target() {
        let w = world();
        for target in [0.15, 0.3, 0.5, 0.7] {
            let resolved =
                resolve_species(&w, &[spec(5, 3.0, "per_feature_std", target)], 3).unwrap();
            assert!(
                (resolved[0].calibrated_prevalence - target).abs() <= PREVALENCE_TOL,
                "target {target}: {}",
                resolved[0].calibrated_prevalence
            );
        }
    }

    #[test]
    fn out_of_bounds_window_is_rejected() {
        let w = world();
        let resolved = resolve_species(&w, &[spec(9, 2.0, "per_feature_std", 0.3)], 4).unwrap();
        assert!(matches!(
            suitability(&w, &resolved[0], 1.0, 1.0),
            Err(GeoError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn suitability_ignores_pixels_outside_the_window() {
        // Mirror of the model's locality invariant: build two worlds that
        // differ only outside a site's window and compare suitabilities.
        let mut cfg_a = test_config(7, vec![0.0]);
        cfg_a.coarse.height = 32;
        cfg_a.coarse.width = 32;
        cfg_a.fine.height = 64;
        cfg_a.fine.width = 64;
        let wa = gen_world(&cfg_a).unwrap();
        let resolved = resolve_species(&wa, &[spec(3, 2.5, "per_feature_std", 0.3)], 5).unwrap();
        let sp = &resolved[0];

        let mut wb = wa.clone();
        {
            let (h, w2) = (wb.coarse.height, wb.coarse.width);
            let band = wb.coarse.band_mut(0);
            // Perturb everything outside the 3x3 window centered at pixel
            // (16, 16); the site (16.5, 15.5) maps there.
            for r in 0..h {
                for c in 0..w2 {
                    if !(r.abs_diff(15) <= 1 && c.abs_diff(16) <= 1) {
                        band[r * w2 + c] += 7.5;
                    }
                }
            }
        }
        let sa = suitability(&wa, sp, 16.5, 16.5).unwrap();
        let sb = suitability(&wb, sp, 16.5, 16.5).unwrap();
        assert_eq!(sa, sb);
    }
}
