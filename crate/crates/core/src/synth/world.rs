//! World generation: seeded Gaussian noise per band, blurred and
//! standardized, on two co-registered grids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{SynthConfig, SynthError};
use crate::geo::{GeoRaster, GeoTransform};

#[derive(Debug, Clone)]
pub struct World {
    pub coarse: GeoRaster,
    pub fine: GeoRaster,
    pub seed: u64,
}

impl World {
    pub fn raster(&self, modality: &str) -> &GeoRaster {
        match modality {
            "coarse" => &self.coarse,
            "fine" => &self.fine,
            other => panic!("unknown modality '{other}'"),
        }
    }
}

fn stream_seed(master: u64, tag: u64, index: u64) -> u64 {
    master
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(tag.wrapping_mul(0xd1b5_4a32_d192_ed03))
        .wrapping_add(index.wrapping_mul(0x94d0_49bb_1331_11eb))
}

/// Standard normal draws via Box-Muller on the ChaCha stream.
fn gaussian_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let u1: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
        let u2: f64 = rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        out.push(r * c);
        out.push(r * s);
    }
    out.truncate(n);
    out
}

/// Separable truncated-Gaussian blur with edge renormalization.
pub(crate) fn gaussian_blur(grid: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return grid.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();

    let mut horiz = vec![0.0f64; grid.len()];
    for r in 0..height {
        for c in 0..width {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (ki, &kw) in kernel.iter().enumerate() {
                let cc = c as isize + ki as isize - radius;
                if cc >= 0 && (cc as usize) < width {
                    acc += kw * grid[r * width + cc as usize];
                    wsum += kw;
                }
            }
            horiz[r * width + c] = acc / wsum;
        }
    }
    let mut out = vec![0.0f64; grid.len()];
    for r in 0..height {
        for c in 0..width {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (ki, &kw) in kernel.iter().enumerate() {
                let rr = r as isize + ki as isize - radius;
                if rr >= 0 && (rr as usize) < height {
                    acc += kw * horiz[rr as usize * width + c];
                    wsum += kw;
                }
            }
            out[r * width + c] = acc / wsum;
        }
    }
    out
}

fn standardize(grid: &mut [f64]) {
    let n = grid.len() as f64;
    let mean = grid.iter().sum::<f64>() / n;
    let var = grid.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / var.sqrt().max(1e-30);
    for v in grid.iter_mut() {
        *v = (*v - mean) * inv;
    }
}

fn gen_stack(
    label: &str,
    spec: &super::RasterSpec,
    transform: GeoTransform,
    master_seed: u64,
    modality_tag: u64,
) -> GeoRaster {
    let plane = spec.height * spec.width;
    let mut data = vec![0.0f32; spec.bands * plane];
    data.par_chunks_mut(plane).enumerate().for_each(|(b, out)| {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(master_seed, modality_tag, b as u64));
        let noise = gaussian_noise(&mut rng, plane);
        let mut grid = gaussian_blur(&noise, spec.height, spec.width, spec.blur[b]);
        standardize(&mut grid);
        for (o, v) in out.iter_mut().zip(&grid) {
            *o = *v as f32;
        }
    });
    GeoRaster::new(label, spec.bands, spec.height, spec.width, transform, None, data)
}

/// Generate the coarse and fine stacks. Both cover the same world extent;
/// the fine pixel size is derived from co-registration (and validated when
/// configured explicitly). Deterministic per seed, worker-count independent
/// (one counter-derived stream per band).
pub fn gen_world(config: &SynthConfig) -> Result<World, SynthError> {
    config.validate()?;
    let c = &config.coarse;
    let extent_x = c.width as f64 * c.pixel_world;
    let extent_y = c.height as f64 * c.pixel_world;

    let fine_px_x = extent_x / config.fine.width as f64;
    let fine_px_y = extent_y / config.fine.height as f64;
    if (fine_px_x - fine_px_y).abs() > 1e-9 * fine_px_x {
        return Err(SynthError::Config(
            "fine grid does not tile the coarse extent with square pixels".into(),
        ));
    }
    if config.fine.pixel_world > 0.0
        && (config.fine.pixel_world - fine_px_x).abs() > 1e-9 * fine_px_x
    {
        return Err(SynthError::Config(format!(
            "fine.pixel_world {} conflicts with co-registration ({fine_px_x})",
            config.fine.pixel_world
        )));
    }

    let mut ct = GeoTransform::new(0.0, extent_y, c.pixel_world, c.pixel_world);
    ct.crs_label = "synthetic".into();
    let mut ft = GeoTransform::new(0.0, extent_y, fine_px_x, fine_px_y);
    ft.crs_label = "synthetic".into();

    let mut coarse = gen_stack("coarse", c, ct, config.seed, 1);
    let mut fine = gen_stack("fine", &config.fine, ft, config.seed, 2);
    coarse.compute_band_stats()?;
    fine.compute_band_stats()?;
    Ok(World {
        coarse,
        fine,
        seed: config.seed,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::synth::{RasterSpec, SamplingConfig, SpeciesConfig};

    pub(crate) fn test_config(seed: u64, blur: Vec<f64>) -> SynthConfig {
        SynthConfig {
            seed,
            coarse: RasterSpec {
                bands: blur.len(),
                height: 64,
                width: 64,
                pixel_world: 1.0,
                ground_km: 0.6,
                blur,
            },
            fine: RasterSpec {
                bands: 1,
                height: 128,
                width: 128,
                pixel_world: 0.0,
                ground_km: 0.01,
                blur: vec![0.0],
            },
            sampling: SamplingConfig {
                n_po: 10,
                n_pa: 10,
                po_bias_blur: 8.0,
                po_bias_ratio: 1.0,
                date_pool: 4,
                inset_px_coarse: None,
                inset_px_fine: None,
            },
            species: vec![SpeciesConfig {
                id: "s".into(),
                modality: "coarse".into(),
                band: 0,
                window: 1,
                direction: 1,
                alpha: 2.0,
                alpha_mode: "per_feature_std".into(),
                prevalence: 0.3,
            }],
        }
    }

    fn adjacent_correlation(band: &[f32], height: usize, width: usize) -> f64 {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for r in 0..height {
            for c in 0..width - 1 {
                xs.push(band[r * width + c] as f64);
                ys.push(band[r * width + c + 1] as f64);
            }
        }
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            cov += (x - mx) * (y - my);
            vx += (x - mx) * (x - mx);
            vy += (y - my) * (y - my);
        }
        cov / (vx.sqrt() * vy.sqrt())
    }

    #[test]
    fn blur_zero_leaves_white_noise() {
        let world = gen_world(&test_config(7, vec![0.0])).unwrap();
        let rho = adjacent_correlation(world.coarse.band(0), 64, 64);
        assert!(rho.abs() < 0.05, "rho {rho}");
    }

    #[test]
    fn heavy_blur_gives_strong_correlation() {
        let world = gen_world(&test_config(7, vec![4.0])).unwrap();
        let rho = adjacent_correlation(world.coarse.band(0), 64, 64);
        assert!(rho > 0.9, "rho {rho}");
    }

    #[test]
    fn same_seed_reproduces_rasters() {
        let a = gen_world(&test_config(3, vec![1.0, 0.5])).unwrap();
        let b = gen_world(&test_config(3, vec![1.0, 0.5])).unwrap();
        assert_eq!(a.coarse.data(), b.coarse.data());
        assert_eq!(a.fine.data(), b.fine.data());
        let c = gen_world(&test_config(4, vec![1.0, 0.5])).unwrap();
        assert_ne!(a.coarse.data(), c.coarse.data());
    }

    #[test]
    fn stacks_are_coregistered() {
        let world = gen_world(&test_config(1, vec![0.0])).unwrap();
        // A coordinate in the shared interior maps inside both rasters.
        for (lon, lat) in [(0.5, 0.5), (32.0, 32.0), (63.7, 63.7)] {
            assert!(world.coarse.world_to_pixel(lon, lat).is_ok());
            assert!(world.fine.world_to_pixel(lon, lat).is_ok());
        }
        // And both reject a point outside the shared extent.
        assert!(world.coarse.world_to_pixel(64.2, 1.0).is_err());
        assert!(world.fine.world_to_pixel(64.2, 1.0).is_err());
    }

    #[test]
    fn bands_are_standardized() {
        let world = gen_world(&test_config(9, vec![2.0])).unwrap();
        let band = world.coarse.band(0);
        let n = band.len() as f64;
        let mean = band.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = band.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-5);
        assert!((var - 1.0).abs() < 1e-4);
    }
}
