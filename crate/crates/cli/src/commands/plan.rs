//! `msdm plan`: print branch plans, receptive fields, and ground footprints.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use msdm_core::arch::{
    assemble, plan_branch, required_patch_size, ArchConfig, ModelConfig,
};
use msdm_core::geo::{footprint, round2};

use crate::errors::AppError;
use crate::manifest::RunManifest;
use crate::overrides::load_config;

pub fn run(arch_path: &Path, out: Option<&Path>, sets: &[String]) -> Result<(), AppError> {
    let t0 = Instant::now();
    let (arch, resolved) = load_config::<ArchConfig>(arch_path, sets)?;

    let mut text = String::new();
    for m in &arch.modalities {
        m.validate()?;
        let patch = required_patch_size(m);
        writeln!(text, "modality '{}' ({} bands, raster {})", m.name, m.bands, m.raster).unwrap();
        writeln!(
            text,
            "  encoder: rf {} / jump {}, {} layers",
            m.encoder_rf,
            m.encoder_jump,
            m.encoder.len()
        )
        .unwrap();
        for &scale in &m.scales {
            let plan = plan_branch(
                &m.name,
                m.encoder_rf,
                m.encoder_jump,
                scale,
                m.encoder_out_channels(),
                m.branch_channels,
                m.head_channels,
                m.proj_dim,
            )?;
            writeln!(
                text,
                "  branch {scale:>4}: rf {} / jump {}  [{}]",
                plan.proven_rf,
                plan.jump,
                plan.describe()
            )
            .unwrap();
        }
        writeln!(text, "  required patch size: {patch}").unwrap();
        writeln!(text, "  ground footprints (pixel {} km):", m.pixel_ground_km).unwrap();
        for &scale in &m.scales {
            let (side, area) = footprint(scale, m.pixel_ground_km);
            writeln!(
                text,
                "    {scale:>4} px -> {side} km x {side} km = {area} km^2",
                side = round2(side),
                area = round2(area)
            )
            .unwrap();
        }
    }

    // Assembly double-checks tiling and central-pixel parity at the
    // configured patch sizes.
    let species_count = 1;
    assemble(
        &ModelConfig {
            arch: arch.clone(),
            species_count,
        },
        arch.seed,
    )?;
    let total_branches: usize = arch.modalities.iter().map(|m| m.scales.len()).sum();
    let fusion: usize = arch
        .modalities
        .iter()
        .map(|m| m.scales.len() * m.proj_dim)
        .sum();
    writeln!(text, "fusion width: {fusion} ({total_branches} branches)").unwrap();

    print!("{text}");

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let plan_path = dir.join("plan.txt");
        std::fs::write(&plan_path, &text)?;
        let mut manifest = RunManifest::new("plan");
        manifest.resolved_config = resolved;
        manifest.add_input(arch_path)?;
        manifest.add_output(&plan_path)?;
        manifest.wall_clock_s = t0.elapsed().as_secs_f64();
        manifest.write(dir)?;
    }
    Ok(())
}
