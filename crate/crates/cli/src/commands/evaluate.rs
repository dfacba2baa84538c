//! `msdm evaluate`: full evaluation report for a checkpoint.

use std::path::Path;
use std::time::Instant;

use msdm_core::arch::Model;
use msdm_core::geo::{read_pa_csv, read_species_csv};
use msdm_core::metrics::{evaluate, write_report_dir};

use crate::commands::load_rasters;
use crate::errors::AppError;
use crate::manifest::RunManifest;

pub fn run(checkpoint: &Path, data: &Path, out: &Path) -> Result<(), AppError> {
    let t0 = Instant::now();
    let (mut model, meta) = Model::load_checkpoint(checkpoint)?;
    let species = read_species_csv(&data.join("species.csv"))?;
    if species.len() != model.species_count {
        return Err(AppError::data(format!(
            "checkpoint has {} species, dataset has {}",
            model.species_count,
            species.len()
        )));
    }
    let pa = read_pa_csv(&data.join("pa.csv"), &species)?;
    let rasters = load_rasters(data, &model.config.arch)?;
    let raster_refs: Vec<_> = rasters.iter().collect();

    let n_train = meta.extra.get("train_pos_counts").map(|s| {
        s.split(' ')
            .filter_map(|c| c.parse::<usize>().ok())
            .collect::<Vec<_>>()
    });
    let n_train = match n_train {
        Some(v) if v.len() == species.len() => Some(v),
        _ => None,
    };

    let report = evaluate(&mut model, &pa, &raster_refs, n_train, 256)?;
    write_report_dir(out, &report)?;

    let mut manifest = RunManifest::new("evaluate");
    manifest.add_input(checkpoint)?;
    manifest.add_input(&data.join("pa.csv"))?;
    manifest.add_input(&data.join("species.csv"))?;
    for m in &model.config.arch.modalities {
        manifest.add_input(&data.join(&m.raster))?;
    }
    for file in ["species_metrics.csv", "site_metrics.csv", "summary.csv"] {
        manifest.add_output(&out.join(file))?;
    }
    manifest
        .counts
        .insert("sites_evaluated".into(), report.sites.len() as i64);
    manifest
        .counts
        .insert("sites_excluded".into(), report.n_sites_excluded as i64);
    manifest
        .counts
        .insert("species_undefined_auc".into(), report.n_species_undefined as i64);
    manifest.wall_clock_s = t0.elapsed().as_secs_f64();
    manifest.write(out)?;

    match report.median_auc {
        Some(auc) => println!("median AUC: {auc:.4}"),
        None => println!("median AUC: undefined (no species with both classes)"),
    }
    println!("site F1 mean: {:.4}", report.mean_f1);
    println!(
        "sites: {} evaluated, {} excluded; species with undefined AUC: {}",
        report.sites.len(),
        report.n_sites_excluded,
        report.n_species_undefined
    );
    println!("report written to {}", out.display());
    Ok(())
}
