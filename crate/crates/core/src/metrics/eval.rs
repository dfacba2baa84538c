//! Full evaluation of a model on a presence-absence table.

use rayon::prelude::*;

use super::{binarize, median, site_f1, species_auc, MetricsError};
use crate::arch::Model;
use crate::geo::{extract_patch, GeoRaster, OccurrenceTable};
use crate::nn::{Mode, Tensor};

pub const BINARIZATION_THRESHOLD: f32 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SiteMetric {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
    pub f1: f64,
}

/// Per-species AUC vector, per-site F1 vector, aggregates, and occurrence
/// counts for Δ-comparisons.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub species_ids: Vec<String>,
    /// `None` where the validation set has no positives or no negatives.
    pub per_species_auc: Vec<Option<f64>>,
    /// Median over the defined AUC entries only.
    pub median_auc: Option<f64>,
    pub sites: Vec<SiteMetric>,
    pub mean_f1: f64,
    pub n_sites_excluded: usize,
    pub n_species_undefined: usize,
    pub n_val_positives: Vec<usize>,
    pub n_train_positives: Vec<usize>,
    pub threshold: f32,
    /// Both-empty site F1 convention used by this report.
    pub empty_sets_score: f64,
}

/// Evaluate in eval mode (batch-norm running statistics): sites whose
/// patches fail extraction are excluded and counted; species without both
/// classes in the remaining sites get an undefined AUC. Deterministic and
/// side-effect-free on the model.
pub fn evaluate(
    model: &mut Model,
    pa: &OccurrenceTable,
    rasters: &[&GeoRaster],
    n_train_positives: Option<Vec<usize>>,
    batch_size: usize,
) -> Result<EvalReport, MetricsError> {
    let layout = model.patch_layout();
    assert_eq!(rasters.len(), layout.len(), "one raster per modality");
    let species_count = pa.species_count();

    let extracted: Vec<Option<(usize, Vec<Vec<f32>>)>> = pa
        .sites
        .par_iter()
        .enumerate()
        .map(|(si, site)| {
            let mut per_modality = Vec::with_capacity(rasters.len());
            for (raster, (_, _, size)) in rasters.iter().zip(&layout) {
                match extract_patch(raster, (site.lon, site.lat), *size) {
                    Ok(p) => per_modality.push(p.values),
                    Err(_) => return None,
                }
            }
            Some((si, per_modality))
        })
        .collect();
    let kept: Vec<(usize, Vec<Vec<f32>>)> = extracted.into_iter().flatten().collect();
    let n_sites_excluded = pa.sites.len() - kept.len();

    // Forward in batches; scores stay aligned with `kept`.
    let mut scores: Vec<f32> = Vec::with_capacity(kept.len() * species_count);
    for chunk in kept.chunks(batch_size.max(1)) {
        let n = chunk.len();
        let mut patches = Vec::with_capacity(layout.len());
        for (mi, (raster, (_, _, size))) in rasters.iter().zip(&layout).enumerate() {
            let per_sample = raster.bands * size * size;
            let mut values = Vec::with_capacity(n * per_sample);
            for (_, mods) in chunk {
                values.extend_from_slice(&mods[mi]);
            }
            patches.push(Tensor::from_vec(&[n, raster.bands, *size, *size], values));
        }
        let probs = model.forward(&patches, Mode::Eval)?;
        scores.extend_from_slice(probs.values());
    }
    model.clear_caches();

    // Per-species AUC over the included sites.
    let mut per_species_auc = Vec::with_capacity(species_count);
    let mut n_val_positives = vec![0usize; species_count];
    for (si, _) in &kept {
        for &sp in &pa.sites[*si].species {
            n_val_positives[sp as usize] += 1;
        }
    }
    for sp in 0..species_count {
        let col: Vec<f32> = (0..kept.len())
            .map(|row| scores[row * species_count + sp])
            .collect();
        let labels: Vec<bool> = kept
            .iter()
            .map(|(si, _)| pa.sites[*si].species.binary_search(&(sp as u32)).is_ok())
            .collect();
        per_species_auc.push(species_auc(&col, &labels));
    }
    let defined: Vec<f64> = per_species_auc.iter().flatten().copied().collect();
    let n_species_undefined = species_count - defined.len();
    let median_auc = median(&defined);

    // Per-site F1 at the fixed threshold.
    let sites: Vec<SiteMetric> = kept
        .iter()
        .enumerate()
        .map(|(row, (si, _))| {
            let site = &pa.sites[*si];
            let pred = binarize(
                &scores[row * species_count..(row + 1) * species_count],
                BINARIZATION_THRESHOLD,
            );
            SiteMetric {
                id: site.id.clone(),
                lon: site.lon,
                lat: site.lat,
                f1: site_f1(&pred, &site.species),
            }
        })
        .collect();
    let mean_f1 = if sites.is_empty() {
        0.0
    } else {
        sites.iter().map(|s| s.f1).sum::<f64>() / sites.len() as f64
    };

    Ok(EvalReport {
        species_ids: pa.species_ids.clone(),
        per_species_auc,
        median_auc,
        sites,
        mean_f1,
        n_sites_excluded,
        n_species_undefined,
        n_val_positives,
        n_train_positives: n_train_positives.unwrap_or_else(|| vec![0; species_count]),
        threshold: BINARIZATION_THRESHOLD,
        empty_sets_score: 1.0,
    })
}
