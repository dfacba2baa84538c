//! `msdm train`: train a model on presence-only data with per-epoch
//! validation, checkpointing, and a run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Deserialize;

use msdm_core::arch::{assemble, ArchConfig, Model, ModelConfig};
use msdm_core::geo::{merge_po_records, read_pa_csv, read_po_raw_csv, read_species_csv};
use msdm_core::nn::SgdConfig;
use msdm_core::train::{train_with_progress, EpochStats, TrainConfig};

use crate::commands::{dataset_files, load_rasters};
use crate::errors::AppError;
use crate::manifest::RunManifest;
use crate::overrides::load_config;

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
pub struct TrainFileConfig {
    pub data_dir: String,
    pub arch: String,
    pub epochs: u64,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub weight_decay: f32,
    #[serde(default)]
    pub pos_weight: Option<f32>,
    #[serde(default)]
    pub shuffle_seed: u64,
    /// Parameter-init seed; defaults to the arch config's seed.
    #[serde(default)]
    pub init_seed: Option<u64>,
    #[serde(default = "default_true")]
    pub validate_each_epoch: bool,
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out =
        String::from("epoch,mean_loss,val_median_auc,val_mean_f1,skipped_sites,consumed_sites\n");
    for e in history {
        let auc = e.val_median_auc.map(|v| v.to_string()).unwrap_or_default();
        let f1 = e.val_mean_f1.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{auc},{f1},{},{}\n",
            e.epoch, e.mean_loss, e.skipped_sites, e.consumed_sites
        ));
    }
    out
}

pub fn run(
    config_path: &Path,
    out: &Path,
    resume: Option<&Path>,
    sets: &[String],
) -> Result<(), AppError> {
    let t0 = Instant::now();
    let (cfg, resolved) = load_config::<TrainFileConfig>(config_path, sets)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let data_dir = base.join(&cfg.data_dir);
    let arch_path = base.join(&cfg.arch);
    let (arch, _) = load_config::<ArchConfig>(&arch_path, &[])?;

    let species = read_species_csv(&data_dir.join("species.csv"))?;
    let po_raw = read_po_raw_csv(&data_dir.join("po.csv"))?;
    let po = merge_po_records(&po_raw, &species)?;
    let pa_path = data_dir.join("pa.csv");
    let pa = if pa_path.exists() {
        Some(read_pa_csv(&pa_path, &species)?)
    } else {
        None
    };
    let rasters = load_rasters(&data_dir, &arch)?;
    let raster_refs: Vec<_> = rasters.iter().collect();

    let seed = cfg.init_seed.unwrap_or(arch.seed);
    let mut model: Model = match resume {
        Some(ckpt) => {
            let (model, _) = Model::load_checkpoint(ckpt)?;
            if model.species_count != species.len() {
                return Err(AppError::data(format!(
                    "checkpoint has {} species, dataset has {}",
                    model.species_count,
                    species.len()
                )));
            }
            model
        }
        None => assemble(
            &ModelConfig {
                arch: arch.clone(),
                species_count: species.len(),
            },
            seed,
        )?,
    };

    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        sgd: SgdConfig {
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            seed,
        },
        pos_weight: cfg.pos_weight,
        shuffle_seed: cfg.shuffle_seed,
        validate_each_epoch: cfg.validate_each_epoch,
    };

    std::fs::create_dir_all(out)?;
    let ckpt_dir = out.join("checkpoints");
    let outcome = train_with_progress(
        &mut model,
        &po,
        pa.as_ref(),
        &raster_refs,
        &train_cfg,
        Some(&ckpt_dir),
        |e| {
            let auc = e
                .val_median_auc
                .map(|v| format!(" val_auc {v:.4}"))
                .unwrap_or_default();
            println!(
                "epoch {:>3}/{}: loss {:.6}{auc} (skipped {})",
                e.epoch, cfg.epochs, e.mean_loss, e.skipped_sites
            );
        },
    )?;

    let history_path = out.join("history.csv");
    std::fs::write(&history_path, history_csv(&outcome.history))?;

    let mut manifest = RunManifest::new("train");
    manifest.resolved_config = resolved;
    manifest.seeds.insert("init".into(), seed);
    manifest.seeds.insert("shuffle".into(), cfg.shuffle_seed);
    manifest.add_input(config_path)?;
    manifest.add_input(&arch_path)?;
    manifest.add_inputs(&dataset_files(&data_dir, &arch))?;
    if let Some(ckpt) = resume {
        manifest.add_input(ckpt)?;
    }
    let mut outputs: Vec<PathBuf> = vec![history_path];
    if let Some(p) = &outcome.last_checkpoint {
        outputs.push(p.clone());
    }
    if let Some(p) = &outcome.best_checkpoint {
        outputs.push(p.clone());
    }
    manifest.add_outputs(&outputs)?;
    manifest
        .values
        .insert("pos_weight".into(), outcome.pos_weight.to_string());
    if let Some(best) = outcome.best_epoch {
        manifest.counts.insert("best_epoch".into(), best as i64);
    }
    if let Some(last) = outcome.history.last() {
        manifest
            .counts
            .insert("skipped_sites".into(), last.skipped_sites as i64);
        manifest
            .counts
            .insert("consumed_sites".into(), last.consumed_sites as i64);
    }
    manifest.wall_clock_s = t0.elapsed().as_secs_f64();
    manifest.write(out)?;

    if let Some((epoch, auc)) = outcome.best_epoch.zip(outcome.best_val_auc) {
        println!("best epoch {epoch} (val median AUC {auc:.4})");
    }
    println!("run written to {}", out.display());
    Ok(())
}
