//! `msdm` — multi-scale, multimodal species distribution modeling.
//!
//! Subcommands: `synth`, `plan`, `train`, `evaluate`, `ablate`, `compare`,
//! `predict`. Exit codes: 0 success, 1 usage/config error, 2 data error,
//! 3 numerical failure.

mod commands;
mod errors;
mod manifest;
mod overrides;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};


#[derive(Parser)]
#[command(name = "msdm", version, about = "Multi-scale, multimodal species distribution modeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (rasters, PO/PA tables, ground truth).
    Synth {
        /// Synthesis config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Override a config key, e.g. --set sampling.n_po=500
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print branch plans, receptive fields, and ground footprints.
    Plan {
        /// Architecture config (TOML).
        #[arg(long)]
        arch: PathBuf,
        /// Optional directory for plan.txt and the run manifest.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Train a model on presence-only data.
    Train {
        /// Train config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output run directory (checkpoints, history, manifest).
        #[arg(long)]
        out: PathBuf,
        /// Resume from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Evaluate a checkpoint on the presence-absence table.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory (rasters, pa.csv, species.csv).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate a list of scale/modality configurations.
    Ablate {
        /// Sweep config (TOML).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Per-species ΔAUC and per-site ΔF1 between two evaluation runs.
    Compare {
        #[arg(long = "run-a")]
        run_a: PathBuf,
        #[arg(long = "run-b")]
        run_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Top-k species probabilities at a coordinate.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        lon: f64,
        #[arg(long, allow_negative_numbers = true)]
        lat: f64,
        #[arg(short, long, default_value_t = 25)]
        k: usize,
    },
}

fn init_threads() {
    if let Ok(v) = std::env::var("MSDM_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let result = match cli.command {
        Command::Synth { config, out, set } => commands::synth::run(&config, &out, &set),
        Command::Plan { arch, out, set } => commands::plan::run(&arch, out.as_deref(), &set),
        Command::Train {
            config,
            out,
            resume,
            set,
        } => commands::train::run(&config, &out, resume.as_deref(), &set),
        Command::Evaluate {
            checkpoint,
            data,
            out,
        } => commands::evaluate::run(&checkpoint, &data, &out),
        Command::Ablate { config, out, set } => commands::ablate::run(&config, &out, &set),
        Command::Compare { run_a, run_b, out } => commands::compare::run(&run_a, &run_b, &out),
        Command::Predict {
            checkpoint,
            data,
            lon,
            lat,
            k,
        } => commands::predict::run(&checkpoint, &data, lon, lat, k),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
