//! Epoch loop: forward / loss / backward / SGD, per-epoch validation, and
//! checkpointing with best-model retention.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::batch::make_batches;
use super::loss::weighted_loss_and_grad;
use super::TrainError;
use crate::arch::Model;
use crate::geo::{GeoRaster, OccurrenceTable};
use crate::metrics::evaluate;
use crate::nn::{Mode, SgdConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: u64,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    /// Global positive-class weight; when absent it defaults to
    /// `species_count / mean positives per training site`, floored at 1.
    pub pos_weight: Option<f32>,
    pub shuffle_seed: u64,
    /// Validate on the PA table after every epoch and retain the best
    /// checkpoint by median AUC.
    pub validate_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 256,
            sgd: SgdConfig::default(),
            pos_weight: None,
            shuffle_seed: 0,
            validate_each_epoch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs < 1 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        self.sgd.validate().map_err(TrainError::Config)?;
        if let Some(pw) = self.pos_weight {
            if !(pw >= 1.0) {
                return Err(TrainError::Config(format!(
                    "pos_weight must be >= 1, got {pw}"
                )));
            }
        }
        Ok(())
    }

    pub fn resolve_pos_weight(&self, table: &OccurrenceTable) -> f32 {
        match self.pos_weight {
            Some(pw) => pw,
            None => {
                let mean_pos = table.mean_positives_per_site();
                if mean_pos > 0.0 {
                    ((table.species_count() as f64 / mean_pos) as f32).max(1.0)
                } else {
                    1.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u64,
    pub mean_loss: f64,
    pub val_median_auc: Option<f64>,
    pub val_mean_f1: Option<f64>,
    pub skipped_sites: usize,
    pub consumed_sites: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    pub pos_weight: f32,
    pub best_epoch: Option<u64>,
    pub best_val_auc: Option<f64>,
    pub last_checkpoint: Option<PathBuf>,
    pub best_checkpoint: Option<PathBuf>,
}

/// Train `model` on the merged PO table. When `checkpoint_dir` is given,
/// `last.ckpt` is rewritten after every epoch and `best.ckpt` tracks the
/// highest validation median AUC (ties keep the earlier epoch). Resuming is
/// implicit: a model whose `epoch` counter is already at `k` continues with
/// epoch `k + 1`, and per-epoch shuffles depend only on `(seed, epoch)`.
pub fn train(
    model: &mut Model,
    po: &OccurrenceTable,
    pa: Option<&OccurrenceTable>,
    rasters: &[&GeoRaster],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    train_with_progress(model, po, pa, rasters, cfg, checkpoint_dir, |_| {})
}

/// `train` with a per-epoch observer (progress printing, logging).
pub fn train_with_progress(
    model: &mut Model,
    po: &OccurrenceTable,
    pa: Option<&OccurrenceTable>,
    rasters: &[&GeoRaster],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let layout = model.patch_layout();
    assert_eq!(layout.len(), rasters.len(), "one raster per modality");
    let patch_sizes: Vec<usize> = layout.iter().map(|(_, _, s)| *s).collect();
    let pos_weight = cfg.resolve_pos_weight(po);
    let train_counts = po.positives_per_species();

    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut extra = BTreeMap::new();
    extra.insert("pos_weight".to_string(), pos_weight.to_string());
    extra.insert(
        "train_pos_counts".to_string(),
        train_counts
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(" "),
    );

    let mut history = Vec::new();
    let mut best: Option<(u64, f64)> = None;
    let start_epoch = model.epoch;
    for epoch in start_epoch + 1..=cfg.epochs {
        let (batches, skip) = make_batches(
            po,
            rasters,
            &patch_sizes,
            cfg.batch_size,
            cfg.shuffle_seed,
            epoch,
        );
        let mut loss_sum = 0.0f64;
        let mut sample_count = 0usize;
        for batch in &batches {
            let probs = model.forward(&batch.patches, Mode::Train)?;
            let (loss, grad) = weighted_loss_and_grad(&probs, &batch.labels, pos_weight)?;
            let n = batch.labels.shape()[0];
            loss_sum += loss * n as f64;
            sample_count += n;
            model.zero_grads();
            model.backward(&grad)?;
            model.sgd_update(&cfg.sgd);
        }
        model.epoch = epoch;
        let mean_loss = if sample_count > 0 {
            loss_sum / sample_count as f64
        } else {
            0.0
        };

        let (val_auc, val_f1) = match (cfg.validate_each_epoch, pa) {
            (true, Some(pa_table)) => {
                let report = evaluate(
                    model,
                    pa_table,
                    rasters,
                    Some(train_counts.clone()),
                    cfg.batch_size,
                )
                .map_err(|e| TrainError::Config(format!("validation failed: {e}")))?;
                (report.median_auc, Some(report.mean_f1))
            }
            _ => (None, None),
        };

        let stats = EpochStats {
            epoch,
            mean_loss,
            val_median_auc: val_auc,
            val_mean_f1: val_f1,
            skipped_sites: skip.skipped,
            consumed_sites: skip.consumed,
        };
        on_epoch(&stats);
        history.push(stats);

        if let Some(dir) = checkpoint_dir {
            model.save_checkpoint(&dir.join("last.ckpt"), &extra)?;
            if let Some(auc) = val_auc {
                let improved = best.map(|(_, b)| auc > b).unwrap_or(true);
                if improved {
                    best = Some((epoch, auc));
                    model.save_checkpoint(&dir.join("best.ckpt"), &extra)?;
                }
            }
        } else if let Some(auc) = val_auc {
            let improved = best.map(|(_, b)| auc > b).unwrap_or(true);
            if improved {
                best = Some((epoch, auc));
            }
        }
    }

    Ok(TrainOutcome {
        history,
        pos_weight,
        best_epoch: best.map(|(e, _)| e),
        best_val_auc: best.map(|(_, a)| a),
        last_checkpoint: checkpoint_dir.map(|d| d.join("last.ckpt")),
        best_checkpoint: checkpoint_dir
            .filter(|_| best.is_some())
            .map(|d| d.join("best.ckpt")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{assemble, ArchConfig, EncoderLayerCfg, ModalityConfig, ModelConfig};
    use crate::geo::{GeoTransform, Site, TableKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn world_raster(seed: u64) -> GeoRaster {
        let size = 24usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = GeoTransform::new(0.0, size as f64, 1.0, 1.0);
        let data: Vec<f32> = (0..2 * size * size)
            .map(|_| rng.random::<f32>() * 2.0 - 1.0)
            .collect();
        let mut r = GeoRaster::new("env", 2, size, size, t, None, data);
        r.compute_band_stats().unwrap();
        r
    }

    fn tiny_model(species: usize, scales: Vec<usize>, seed: u64) -> Model {
        let cfg = ModelConfig {
            arch: ArchConfig {
                seed,
                modalities: vec![ModalityConfig {
                    name: "env".into(),
                    raster: "env.grb1".into(),
                    bands: 2,
                    pixel_ground_km: 1.0,
                    encoder: vec![EncoderLayerCfg {
                        kind: "conv".into(),
                        kernel: 1,
                        stride: 1,
                        out: 8,
                    }],
                    encoder_rf: 1,
                    encoder_jump: 1,
                    scales,
                    branch_channels: 8,
                    head_channels: 16,
                    proj_dim: 16,
                }],
            },
            species_count: species,
        };
        assemble(&cfg, seed).unwrap()
    }

    /// Synthetic PO table: species 0 present where band 0 is high at the
    /// center pixel, species 1 where it is low.
    fn po_table(raster: &GeoRaster, n: usize) -> OccurrenceTable {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut sites = Vec::new();
        for i in 0..n {
            let lon = 3.0 + rng.random::<f64>() * 18.0;
            let lat = 3.0 + rng.random::<f64>() * 18.0;
            let (row, col) = raster.world_to_pixel(lon, lat).unwrap();
            let v = raster.value(0, row, col);
            sites.push(Site {
                id: format!("po_{i}"),
                lon,
                lat,
                date: "d".into(),
                species: if v > 0.0 { vec![0] } else { vec![1] },
            });
        }
        OccurrenceTable {
            kind: TableKind::PresenceOnly,
            sites,
            species_ids: vec!["hi".into(), "lo".into()],
        }
    }

    /// Trainable parameter tensors of a checkpoint, running stats excluded.
    fn checkpoint_params(path: &std::path::Path) -> Vec<(String, Vec<f32>)> {
        crate::nn::read_checkpoint(path)
            .unwrap()
            .tensors
            .into_iter()
            .filter(|(name, _, _)| !name.contains("running_"))
            .map(|(name, _, values)| (name, values))
            .collect()
    }

    #[test]
    fn zero_like_lr_keeps_parameters_and_history_flat() {
        // Batch-norm statistics depend on batch composition, so the whole
        // table rides in one batch to make epochs comparable.
        let raster = world_raster(5);
        let po = po_table(&raster, 40);
        let dir = tempfile::tempdir().unwrap();
        let (before_dir, after_dir) = (dir.path().join("b"), dir.path().join("a"));
        let mut model = tiny_model(2, vec![1], 7);
        std::fs::create_dir_all(&before_dir).unwrap();
        model
            .save_checkpoint(&before_dir.join("init.ckpt"), &Default::default())
            .unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 64,
            sgd: SgdConfig {
                learning_rate: 0.0,
                weight_decay: 0.0,
                seed: 7,
            },
            pos_weight: Some(1.0),
            shuffle_seed: 1,
            validate_each_epoch: false,
        };
        let outcome = train(&mut model, &po, None, &[&raster], &cfg, Some(&after_dir)).unwrap();
        assert_eq!(outcome.history.len(), 2);
        assert!((outcome.history[0].mean_loss - outcome.history[1].mean_loss).abs() < 1e-12);
        let before = checkpoint_params(&before_dir.join("init.ckpt"));
        let after = checkpoint_params(&after_dir.join("last.ckpt"));
        assert_eq!(before, after);
    }

    #[test]
    fn loss_decreases_on_learnable_synthetic_data() {
        let raster = world_raster(11);
        let po = po_table(&raster, 60);
        let mut model = tiny_model(2, vec![1], 3);
        let cfg = TrainConfig {
            epochs: 12,
            batch_size: 16,
            sgd: SgdConfig {
                learning_rate: 0.05,
                weight_decay: 0.0001,
                seed: 3,
            },
            pos_weight: Some(1.0),
            shuffle_seed: 4,
            validate_each_epoch: false,
        };
        let outcome = train(&mut model, &po, None, &[&raster], &cfg, None).unwrap();
        let first = outcome.history.first().unwrap().mean_loss;
        let last = outcome.history.last().unwrap().mean_loss;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn identical_configs_give_bitwise_identical_histories() {
        let raster = world_raster(2);
        let po = po_table(&raster, 30);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            sgd: SgdConfig {
                learning_rate: 0.02,
                weight_decay: 0.0001,
                seed: 13,
            },
            pos_weight: None,
            shuffle_seed: 21,
            validate_each_epoch: false,
        };
        let mut m1 = tiny_model(2, vec![1, 5], 13);
        let mut m2 = tiny_model(2, vec![1, 5], 13);
        let h1 = train(&mut m1, &po, None, &[&raster], &cfg, None).unwrap();
        let h2 = train(&mut m2, &po, None, &[&raster], &cfg, None).unwrap();
        let l1: Vec<f64> = h1.history.iter().map(|e| e.mean_loss).collect();
        let l2: Vec<f64> = h2.history.iter().map(|e| e.mean_loss).collect();
        assert_eq!(l1, l2);
    }

    #[test]
    fn skipped_plus_consumed_covers_the_table() {
        let raster = world_raster(8);
        let mut po = po_table(&raster, 25);
        // Push a few sites to the border so a 5-pixel window cannot fit.
        for (i, site) in po.sites.iter_mut().enumerate().take(4) {
            site.lon = 0.5;
            site.lat = 1.0 + i as f64 * 0.2;
        }
        let mut model = tiny_model(2, vec![1, 5], 1);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            sgd: SgdConfig {
                learning_rate: 0.01,
                weight_decay: 0.0,
                seed: 1,
            },
            pos_weight: Some(1.0),
            shuffle_seed: 5,
            validate_each_epoch: false,
        };
        let outcome = train(&mut model, &po, None, &[&raster], &cfg, None).unwrap();
        for stats in &outcome.history {
            assert_eq!(stats.skipped_sites + stats.consumed_sites, po.sites.len());
            assert!(stats.skipped_sites >= 4);
        }
    }

    #[test]
    fn pos_weight_defaults_to_species_over_mean_positives() {
        let raster = world_raster(3);
        let po = po_table(&raster, 20);
        let cfg = TrainConfig::default();
        // Every site has exactly one positive of two species.
        assert_eq!(cfg.resolve_pos_weight(&po), 2.0);
    }
}
