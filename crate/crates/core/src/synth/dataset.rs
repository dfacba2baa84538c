//! Dataset directory writer: rasters, occurrence tables, species list, and
//! the ground-truth manifest used by controlled experiments.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::species::resolve_species;
use super::world::gen_world;
use super::{sample_occurrences, ResolvedSpecies, SynthConfig, SynthError};
use crate::geo::{write_grb1, write_pa_csv, write_po_raw_csv, write_species_csv};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub n_po_rows: usize,
    pub n_po_raw_records: usize,
    pub n_pa_sites: usize,
    pub species: Vec<ResolvedSpecies>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthManifest {
    seed: u64,
    coarse_ground_km: f64,
    fine_ground_km: f64,
    species: Vec<ResolvedSpecies>,
}

/// Generate the world, calibrate species, sample occurrences, and write the
/// whole dataset: `coarse.grb1`, `fine.grb1` (band statistics cached in the
/// headers), `po.csv` (raw records), `pa.csv`, `species.csv`, `truth.toml`.
pub fn write_dataset(config: &SynthConfig, out_dir: &Path) -> Result<DatasetSummary, SynthError> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;

    let world = gen_world(config)?;
    let species = resolve_species(&world, &config.species, config.seed)?;
    let samples = sample_occurrences(&world, &species, config)?;

    let mut files = Vec::new();
    let coarse_path = out_dir.join("coarse.grb1");
    write_grb1(&coarse_path, &world.coarse)?;
    files.push(coarse_path);
    let fine_path = out_dir.join("fine.grb1");
    write_grb1(&fine_path, &world.fine)?;
    files.push(fine_path);

    let po_path = out_dir.join("po.csv");
    write_po_raw_csv(&po_path, &samples.po_raw)?;
    files.push(po_path);
    let pa_path = out_dir.join("pa.csv");
    write_pa_csv(&pa_path, &samples.pa)?;
    files.push(pa_path);
    let species_path = out_dir.join("species.csv");
    write_species_csv(&species_path, &samples.species)?;
    files.push(species_path);

    let truth = TruthManifest {
        seed: config.seed,
        coarse_ground_km: config.coarse.ground_km,
        fine_ground_km: config.fine.ground_km,
        species: species.clone(),
    };
    let truth_path = out_dir.join("truth.toml");
    fs::write(
        &truth_path,
        toml::to_string_pretty(&truth)
            .map_err(|e| SynthError::Config(format!("cannot serialize truth manifest: {e}")))?,
    )?;
    files.push(truth_path);

    Ok(DatasetSummary {
        out_dir: out_dir.to_path_buf(),
        files,
        n_po_rows: samples.po.sites.len(),
        n_po_raw_records: samples.po_raw.len(),
        n_pa_sites: samples.pa.sites.len(),
        species,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{read_grb1, read_pa_csv, read_po_raw_csv, read_species_csv};
    use crate::synth::world::tests::test_config;

    #[test]
    fn dataset_roundtrips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = test_config(31, vec![1.0]);
        cfg.sampling.n_po = 50;
        cfg.sampling.n_pa = 25;
        let summary = write_dataset(&cfg, dir.path()).unwrap();
        assert_eq!(summary.n_po_rows, 50);
        assert_eq!(summary.n_pa_sites, 25);

        let coarse = read_grb1(&dir.path().join("coarse.grb1")).unwrap();
        assert!(coarse.band_stats().is_some());
        let species = read_species_csv(&dir.path().join("species.csv")).unwrap();
        assert_eq!(species.len(), 1);
        let raw = read_po_raw_csv(&dir.path().join("po.csv")).unwrap();
        assert!(!raw.is_empty());
        let pa = read_pa_csv(&dir.path().join("pa.csv"), &species).unwrap();
        assert_eq!(pa.sites.len(), 25);
    }
}
