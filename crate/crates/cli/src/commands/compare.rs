//! `msdm compare`: Δ tables between two evaluation runs.

use std::path::Path;
use std::time::Instant;

use msdm_core::metrics::{compare, read_report_dir};

use crate::errors::AppError;
use crate::manifest::RunManifest;

pub fn run(run_a: &Path, run_b: &Path, out: &Path) -> Result<(), AppError> {
    let t0 = Instant::now();
    let a = read_report_dir(run_a)?;
    let b = read_report_dir(run_b)?;
    let summary = compare(&a, &b, out)?;

    let mut manifest = RunManifest::new("compare");
    for dir in [run_a, run_b] {
        for file in ["species_metrics.csv", "site_metrics.csv"] {
            manifest.add_input(&dir.join(file))?;
        }
    }
    manifest.add_output(&out.join("delta_species.csv"))?;
    manifest.add_output(&out.join("delta_sites.csv"))?;
    manifest
        .counts
        .insert("species_rows".into(), summary.species_rows as i64);
    manifest
        .counts
        .insert("site_rows".into(), summary.site_rows as i64);
    if let Some(d) = summary.delta_median_auc {
        manifest.values.insert("delta_median_auc".into(), d.to_string());
    }
    manifest
        .values
        .insert("delta_mean_f1".into(), summary.delta_mean_f1.to_string());
    manifest.wall_clock_s = t0.elapsed().as_secs_f64();
    manifest.write(out)?;

    match summary.delta_median_auc {
        Some(d) => println!("delta median AUC (b - a): {d:+.4}"),
        None => println!("delta median AUC: undefined"),
    }
    println!("delta site F1 mean (b - a): {:+.4}", summary.delta_mean_f1);
    println!(
        "{} species rows, {} site rows written to {}",
        summary.species_rows,
        summary.site_rows,
        out.display()
    );
    Ok(())
}
