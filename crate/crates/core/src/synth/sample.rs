//! Occurrence sampling: a uniform PA survey grid with Bernoulli presences,
//! and spatially biased PO records merged through the standard merging rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::species::{suitability, ResolvedSpecies};
use super::world::gaussian_blur;
use super::{SynthConfig, SynthError, World};
use crate::geo::{
    merge_po_records, OccurrenceTable, RawOccurrence, Site, SpeciesList, TableKind,
};

#[derive(Debug)]
pub struct SampleOutput {
    pub po_raw: Vec<RawOccurrence>,
    pub po: OccurrenceTable,
    pub pa: OccurrenceTable,
    pub species: SpeciesList,
}

fn stream_seed(master: u64, tag: u64, index: u64) -> u64 {
    master
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(tag.wrapping_mul(0xd1b5_4a32_d192_ed03))
        .wrapping_add(index.wrapping_mul(0x94d0_49bb_1331_11eb))
}

/// World-coordinate rectangle after applying per-modality pixel insets.
fn interior(world: &World, config: &SynthConfig, species: &[ResolvedSpecies]) -> (f64, f64, f64, f64) {
    let default_inset = |modality: &str| -> usize {
        species
            .iter()
            .filter(|s| s.modality == modality)
            .map(|s| (s.window - 1) / 2 + 1)
            .max()
            .unwrap_or(1)
    };
    let coarse_px = config
        .sampling
        .inset_px_coarse
        .unwrap_or_else(|| default_inset("coarse"));
    let fine_px = config
        .sampling
        .inset_px_fine
        .unwrap_or_else(|| default_inset("fine"));
    let inset = (coarse_px as f64 * world.coarse.transform.pixel_size_x)
        .max(fine_px as f64 * world.fine.transform.pixel_size_x);
    let t = &world.coarse.transform;
    let x_lo = t.origin_x + inset;
    let x_hi = t.origin_x + world.coarse.width as f64 * t.pixel_size_x - inset;
    let y_hi = t.origin_y - inset;
    let y_lo = t.origin_y - world.coarse.height as f64 * t.pixel_size_y + inset;
    (x_lo, x_hi, y_lo, y_hi)
}

/// Multiplicative PO sampling-density field on the coarse grid, rescaled so
/// max/min density equals the configured ratio.
fn bias_field(world: &World, config: &SynthConfig) -> Vec<f64> {
    let (h, w) = (world.coarse.height, world.coarse.width);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, 3, 0));
    let noise: Vec<f64> = (0..h * w).map(|_| rng.random::<f64>() - 0.5).collect();
    let smooth = gaussian_blur(&noise, h, w, config.sampling.po_bias_blur.max(1e-9));
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &smooth {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = (hi - lo).max(1e-30);
    let ratio = config.sampling.po_bias_ratio;
    smooth
        .into_iter()
        .map(|v| 1.0 + (ratio - 1.0) * (v - lo) / span)
        .collect()
}

/// Draw the PA survey grid and the biased PO records.
///
/// PA sites sit on a uniform grid inset so that no configured window crosses
/// the edge; each species is present independently with its suitability
/// probability and true (possibly empty) label sets are retained. PO sites
/// are rejection-sampled against the bias field; per-site presences are
/// drawn and sites with zero presences redrawn, so every PO row carries at
/// least one species. Each PO slot owns a counter-derived RNG stream, which
/// makes output independent of the worker count.
pub fn sample_occurrences(
    world: &World,
    species: &[ResolvedSpecies],
    config: &SynthConfig,
) -> Result<SampleOutput, SynthError> {
    let species_list = SpeciesList::new(species.iter().map(|s| s.id.clone()).collect());
    let (x_lo, x_hi, y_lo, y_hi) = interior(world, config, species);
    if x_lo >= x_hi || y_lo >= y_hi {
        return Err(SynthError::Config(
            "interior region is empty after insets".into(),
        ));
    }

    // PA grid.
    let n_pa = config.sampling.n_pa;
    let cols = (n_pa as f64).sqrt().ceil() as usize;
    let rows = n_pa.div_ceil(cols);
    let pa_sites: Vec<Site> = (0..n_pa)
        .into_par_iter()
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            let lon = x_lo + (c as f64 + 0.5) * (x_hi - x_lo) / cols as f64;
            let lat = y_lo + (r as f64 + 0.5) * (y_hi - y_lo) / rows as f64;
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(world.seed, 4, i as u64));
            let mut present = Vec::new();
            for (si, sp) in species.iter().enumerate() {
                let p = suitability(world, sp, lon, lat).expect("PA grid is inset");
                if rng.random::<f64>() < p {
                    present.push(si as u32);
                }
            }
            Site {
                id: format!("pa_{i}"),
                lon,
                lat,
                date: String::new(),
                species: present,
            }
        })
        .collect();
    let pa = OccurrenceTable {
        kind: TableKind::PresenceAbsence,
        sites: pa_sites,
        species_ids: species_list.ids.clone(),
    };

    // PO records: one independent stream per target row.
    let bias = bias_field(world, config);
    let ratio = config.sampling.po_bias_ratio;
    let date_pool = config.sampling.date_pool.max(1);
    let po_raw: Vec<Vec<RawOccurrence>> = (0..config.sampling.n_po)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(world.seed, 5, i as u64));
            let date = format!("2023-{:02}", 1 + i % date_pool);
            loop {
                let lon = x_lo + rng.random::<f64>() * (x_hi - x_lo);
                let lat = y_lo + rng.random::<f64>() * (y_hi - y_lo);
                let (row, col) = world
                    .coarse
                    .world_to_pixel(lon, lat)
                    .expect("interior proposal");
                let density = bias[row * world.coarse.width + col];
                if rng.random::<f64>() >= density / ratio {
                    continue;
                }
                let mut records = Vec::new();
                for sp in species {
                    let p = suitability(world, sp, lon, lat).expect("interior proposal");
                    if rng.random::<f64>() < p {
                        records.push(RawOccurrence {
                            lon,
                            lat,
                            date: date.clone(),
                            species_id: sp.id.clone(),
                        });
                    }
                }
                if !records.is_empty() {
                    return records;
                }
            }
        })
        .collect();
    let po_raw: Vec<RawOccurrence> = po_raw.into_iter().flatten().collect();
    let po = merge_po_records(&po_raw, &species_list)?;

    Ok(SampleOutput {
        po_raw,
        po,
        pa,
        species: species_list,
    })
}

/// Chi-squared statistic of site counts over the four quadrants of a
/// bounding box, against the uniform expectation.
pub fn quadrant_chi2(points: &[(f64, f64)], bounds: (f64, f64, f64, f64)) -> f64 {
    let (x_lo, x_hi, y_lo, y_hi) = bounds;
    let (mx, my) = (0.5 * (x_lo + x_hi), 0.5 * (y_lo + y_hi));
    let mut counts = [0usize; 4];
    for &(x, y) in points {
        let q = (x >= mx) as usize + 2 * ((y >= my) as usize);
        counts[q] += 1;
    }
    let expected = points.len() as f64 / 4.0;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}
