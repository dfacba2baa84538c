//! `msdm predict`: top-k species probabilities at a coordinate.

use std::path::Path;

use msdm_core::arch::Model;
use msdm_core::geo::{extract_patch, read_species_csv};
use msdm_core::nn::{Mode, Tensor};

use crate::commands::load_rasters;
use crate::errors::AppError;

pub fn run(checkpoint: &Path, data: &Path, lon: f64, lat: f64, k: usize) -> Result<(), AppError> {
    let (mut model, _) = Model::load_checkpoint(checkpoint)?;
    let species = read_species_csv(&data.join("species.csv"))?;
    if species.len() != model.species_count {
        return Err(AppError::data(format!(
            "checkpoint has {} species, dataset has {}",
            model.species_count,
            species.len()
        )));
    }
    let rasters = load_rasters(data, &model.config.arch)?;

    let mut patches = Vec::with_capacity(rasters.len());
    for (raster, (name, bands, size)) in rasters.iter().zip(model.patch_layout()) {
        let patch = extract_patch(raster, (lon, lat), size).map_err(|e| {
            AppError::data(format!("cannot extract the '{name}' patch at ({lon}, {lat}): {e}"))
        })?;
        patches.push(Tensor::from_vec(&[1, bands, size, size], patch.values));
    }

    let probs = model.forward(&patches, Mode::Eval)?;
    let mut ranked: Vec<(usize, f32)> = probs.values().iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked.truncate(k.min(species.len()));

    println!("top {} species at ({lon}, {lat}):", ranked.len());
    for (rank, (idx, p)) in ranked.iter().enumerate() {
        println!("{:>3}. {:<24} {p:.6}", rank + 1, species.ids[*idx]);
    }
    Ok(())
}
