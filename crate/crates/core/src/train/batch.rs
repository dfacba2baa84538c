//! Deterministic mini-batch assembly from an occurrence table.
//!
//! Sites are shuffled per epoch from `(shuffle_seed, epoch)`, patches are
//! extracted per modality at the model's required sizes, sites failing
//! extraction are skipped and counted, and the final short batch is kept.
//! Extraction runs in parallel but results are collected in site order, so
//! batch contents are independent of the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::geo::{extract_patch, GeoRaster, OccurrenceTable};
use crate::nn::Tensor;

/// One training batch: per-modality patch tensors sharing the sample
/// dimension, multi-hot labels, and the originating site indices.
#[derive(Debug)]
pub struct Batch {
    pub patches: Vec<Tensor>,
    pub labels: Tensor,
    pub site_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkipReport {
    pub skipped: usize,
    pub consumed: usize,
}

/// Fisher-Yates shuffle of `0..n` seeded from `(seed, epoch)`.
pub fn shuffled_indices(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    use rand::Rng;
    let mixed = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(epoch.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.random::<u64>() % (i as u64 + 1)) as usize;
        idx.swap(i, j);
    }
    idx
}

/// Extract per-modality patches for every site in shuffled order and chunk
/// them into batches. `rasters` and `patch_sizes` follow the model's
/// modality order.
pub fn make_batches(
    table: &OccurrenceTable,
    rasters: &[&GeoRaster],
    patch_sizes: &[usize],
    batch_size: usize,
    shuffle_seed: u64,
    epoch: u64,
) -> (Vec<Batch>, SkipReport) {
    assert_eq!(rasters.len(), patch_sizes.len());
    assert!(batch_size >= 1);
    let species_count = table.species_count();
    let order = shuffled_indices(table.sites.len(), shuffle_seed, epoch);

    // (site index, per-modality patch values) for sites where every modality
    // extracts cleanly.
    let extracted: Vec<Option<(usize, Vec<Vec<f32>>)>> = order
        .par_iter()
        .map(|&si| {
            let site = &table.sites[si];
            let mut per_modality = Vec::with_capacity(rasters.len());
            for (raster, &size) in rasters.iter().zip(patch_sizes) {
                match extract_patch(raster, (site.lon, site.lat), size) {
                    Ok(p) => per_modality.push(p.values),
                    Err(_) => return None,
                }
            }
            Some((si, per_modality))
        })
        .collect();

    let kept: Vec<(usize, Vec<Vec<f32>>)> = extracted.into_iter().flatten().collect();
    let report = SkipReport {
        skipped: table.sites.len() - kept.len(),
        consumed: kept.len(),
    };

    let mut batches = Vec::new();
    for chunk in kept.chunks(batch_size) {
        let n = chunk.len();
        let mut patches = Vec::with_capacity(rasters.len());
        for (mi, (raster, &size)) in rasters.iter().zip(patch_sizes).enumerate() {
            let per_sample = raster.bands * size * size;
            let mut values = Vec::with_capacity(n * per_sample);
            for (_, mods) in chunk {
                values.extend_from_slice(&mods[mi]);
            }
            patches.push(Tensor::from_vec(&[n, raster.bands, size, size], values));
        }
        let mut labels = Tensor::zeros(&[n, species_count]);
        {
            let lv = labels.values_mut();
            for (row, (si, _)) in chunk.iter().enumerate() {
                for &sp in &table.sites[*si].species {
                    lv[row * species_count + sp as usize] = 1.0;
                }
            }
        }
        batches.push(Batch {
            patches,
            labels,
            site_indices: chunk.iter().map(|(si, _)| *si).collect(),
        });
    }
    (batches, report)
}
