//! `msdm ablate`: train and evaluate a list of scale/modality
//! configurations with a shared seed, emitting one summary row per
//! configuration. Row failures are recorded and the sweep continues.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Deserialize;

use msdm_core::arch::{assemble, ArchConfig, ModalityConfig, ModelConfig};
use msdm_core::geo::{merge_po_records, read_pa_csv, read_po_raw_csv, read_species_csv};
use msdm_core::metrics::{evaluate, write_report_dir};
use msdm_core::nn::SgdConfig;
use msdm_core::train::{train, TrainConfig};

use crate::commands::{dataset_files, load_rasters};
use crate::errors::AppError;
use crate::manifest::RunManifest;
use crate::overrides::load_config;

#[derive(Debug, Deserialize)]
pub struct SweepFileConfig {
    pub data_dir: String,
    pub epochs: u64,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub weight_decay: f32,
    #[serde(default)]
    pub pos_weight: Option<f32>,
    #[serde(default)]
    pub shuffle_seed: u64,
    pub init_seed: u64,
    #[serde(default)]
    pub validate_each_epoch: bool,
    /// Modality templates (scales left empty; filled per configuration).
    #[serde(rename = "modality")]
    pub modalities: Vec<ModalityConfig>,
    #[serde(rename = "configuration")]
    pub configurations: Vec<SweepRun>,
}

#[derive(Debug, Deserialize)]
pub struct SweepRun {
    pub name: String,
    /// Modality name -> scale set for this configuration.
    pub scales: BTreeMap<String, Vec<usize>>,
}

struct RowResult {
    name: String,
    modalities: String,
    scales: String,
    median_auc: Option<f64>,
    mean_f1: Option<f64>,
    runtime_s: f64,
    error: Option<String>,
}

fn run_one(
    sweep: &SweepFileConfig,
    run: &SweepRun,
    data_dir: &Path,
    out_dir: &Path,
) -> Result<(Option<f64>, f64), AppError> {
    // Modalities in template order, restricted to the configured names.
    let mut modalities = Vec::new();
    for template in &sweep.modalities {
        if let Some(scales) = run.scales.get(&template.name) {
            let mut m = template.clone();
            m.scales = scales.clone();
            modalities.push(m);
        }
    }
    if modalities.is_empty() {
        return Err(AppError::usage(format!(
            "configuration '{}' references no known modality",
            run.name
        )));
    }
    for name in run.scales.keys() {
        if !sweep.modalities.iter().any(|m| &m.name == name) {
            return Err(AppError::usage(format!(
                "configuration '{}': unknown modality '{name}'",
                run.name
            )));
        }
    }
    let arch = ArchConfig {
        seed: sweep.init_seed,
        modalities,
    };

    let species = read_species_csv(&data_dir.join("species.csv"))?;
    let po_raw = read_po_raw_csv(&data_dir.join("po.csv"))?;
    let po = merge_po_records(&po_raw, &species)?;
    let pa = read_pa_csv(&data_dir.join("pa.csv"), &species)?;
    let rasters = load_rasters(data_dir, &arch)?;
    let raster_refs: Vec<_> = rasters.iter().collect();

    let mut model = assemble(
        &ModelConfig {
            arch,
            species_count: species.len(),
        },
        sweep.init_seed,
    )?;
    let cfg = TrainConfig {
        epochs: sweep.epochs,
        batch_size: sweep.batch_size,
        sgd: SgdConfig {
            learning_rate: sweep.learning_rate,
            weight_decay: sweep.weight_decay,
            seed: sweep.init_seed,
        },
        pos_weight: sweep.pos_weight,
        shuffle_seed: sweep.shuffle_seed,
        validate_each_epoch: sweep.validate_each_epoch,
    };
    let ckpt_dir = out_dir.join("checkpoints");
    let outcome = train(&mut model, &po, Some(&pa), &raster_refs, &cfg, Some(&ckpt_dir))?;
    std::fs::write(
        out_dir.join("history.csv"),
        super::train::history_csv(&outcome.history),
    )?;

    let report = evaluate(
        &mut model,
        &pa,
        &raster_refs,
        Some(po.positives_per_species()),
        sweep.batch_size,
    )?;
    write_report_dir(&out_dir.join("report"), &report)?;
    Ok((report.median_auc, report.mean_f1))
}

pub fn run(config_path: &Path, out: &Path, sets: &[String]) -> Result<(), AppError> {
    let t0 = Instant::now();
    let (sweep, resolved) = load_config::<SweepFileConfig>(config_path, sets)?;
    if sweep.configurations.is_empty() {
        return Err(AppError::usage("sweep lists no configurations"));
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let data_dir = base.join(&sweep.data_dir);
    std::fs::create_dir_all(out)?;

    let mut rows: Vec<RowResult> = Vec::new();
    for run_cfg in &sweep.configurations {
        let run_dir = out.join("runs").join(&run_cfg.name);
        std::fs::create_dir_all(&run_dir)?;
        let run_t0 = Instant::now();
        let result = run_one(&sweep, run_cfg, &data_dir, &run_dir);
        let runtime_s = run_t0.elapsed().as_secs_f64();
        let scales_desc: Vec<String> = run_cfg
            .scales
            .iter()
            .map(|(m, s)| {
                let list: Vec<String> = s.iter().map(|v| v.to_string()).collect();
                format!("{m}:{}", list.join("/"))
            })
            .collect();
        let modalities_desc: Vec<&str> =
            run_cfg.scales.keys().map(|s| s.as_str()).collect();
        match result {
            Ok((auc, f1)) => {
                println!(
                    "configuration '{}': median AUC {}, site F1 mean {:.4} ({runtime_s:.1}s)",
                    run_cfg.name,
                    auc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "n/a".into()),
                    f1
                );
                rows.push(RowResult {
                    name: run_cfg.name.clone(),
                    modalities: modalities_desc.join("+"),
                    scales: scales_desc.join(" "),
                    median_auc: auc,
                    mean_f1: Some(f1),
                    runtime_s,
                    error: None,
                });
            }
            Err(e) => {
                eprintln!("configuration '{}' failed: {e}", run_cfg.name);
                rows.push(RowResult {
                    name: run_cfg.name.clone(),
                    modalities: modalities_desc.join("+"),
                    scales: scales_desc.join(" "),
                    median_auc: None,
                    mean_f1: None,
                    runtime_s,
                    error: Some(e.to_string()),
                });
            }
        }
    }

    let mut csv = String::from("name,modalities,scales,median_auc,site_f1_mean,runtime_s,status\n");
    for r in &rows {
        let status = match &r.error {
            None => "ok".to_string(),
            Some(e) => format!("failed: {}", e.replace(',', ";").replace('\n', " ")),
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{:.1},{status}\n",
            r.name,
            r.modalities,
            r.scales,
            r.median_auc.map(|v| v.to_string()).unwrap_or_default(),
            r.mean_f1.map(|v| v.to_string()).unwrap_or_default(),
            r.runtime_s
        ));
    }
    let summary_path = out.join("summary.csv");
    std::fs::write(&summary_path, csv)?;

    let mut manifest = RunManifest::new("ablate");
    manifest.resolved_config = resolved;
    manifest.seeds.insert("init".into(), sweep.init_seed);
    manifest.seeds.insert("shuffle".into(), sweep.shuffle_seed);
    manifest.add_input(config_path)?;
    if let Some(first) = sweep.configurations.first() {
        // Dataset inputs are shared by every row; digest them once via the
        // first configuration's modality set.
        let mut modalities = Vec::new();
        for template in &sweep.modalities {
            if first.scales.contains_key(&template.name) {
                modalities.push(template.clone());
            }
        }
        let arch = ArchConfig {
            seed: sweep.init_seed,
            modalities,
        };
        manifest.add_inputs(&dataset_files(&data_dir, &arch))?;
    }
    manifest.add_output(&summary_path)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count() as i64;
    manifest.counts.insert("configurations".into(), rows.len() as i64);
    manifest.counts.insert("failed".into(), failed);
    manifest.wall_clock_s = t0.elapsed().as_secs_f64();
    manifest.write(out)?;

    println!("sweep summary written to {}", summary_path.display());
    Ok(())
}
