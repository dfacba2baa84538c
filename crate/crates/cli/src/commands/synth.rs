//! `msdm synth`: generate a synthetic dataset directory.

use std::path::Path;
use std::time::Instant;

use msdm_core::synth::{write_dataset, SynthConfig};

use crate::errors::AppError;
use crate::manifest::RunManifest;
use crate::overrides::load_config;

pub fn run(config_path: &Path, out: &Path, sets: &[String]) -> Result<(), AppError> {
    let t0 = Instant::now();
    let (config, resolved) = load_config::<SynthConfig>(config_path, sets)?;
    config.validate().map_err(AppError::from)?;

    let summary = write_dataset(&config, out)?;

    let mut manifest = RunManifest::new("synth");
    manifest.resolved_config = resolved;
    manifest.seeds.insert("world".into(), config.seed);
    manifest.add_input(config_path)?;
    manifest.add_outputs(&summary.files)?;
    manifest
        .counts
        .insert("po_rows".into(), summary.n_po_rows as i64);
    manifest
        .counts
        .insert("po_raw_records".into(), summary.n_po_raw_records as i64);
    manifest
        .counts
        .insert("pa_sites".into(), summary.n_pa_sites as i64);
    manifest
        .counts
        .insert("species".into(), summary.species.len() as i64);
    manifest.wall_clock_s = t0.elapsed().as_secs_f64();
    manifest.write(out)?;

    println!("dataset written to {}", out.display());
    println!(
        "  po rows: {} (from {} raw records), pa sites: {}, species: {}",
        summary.n_po_rows,
        summary.n_po_raw_records,
        summary.n_pa_sites,
        summary.species.len()
    );
    for sp in &summary.species {
        println!(
            "  species {}: modality {} band {} window {} direction {:+} prevalence {:.3}",
            sp.id, sp.modality, sp.band, sp.window, sp.direction, sp.calibrated_prevalence
        );
    }
    Ok(())
}
