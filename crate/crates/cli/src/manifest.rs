//! Run manifests: one per run, with input/output digests so runs are
//! reproducible by reference. Wall-clock fields are informational and
//! excluded from any reproducibility comparison.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::errors::AppError;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize, Default)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub wall_clock_s: f64,
    pub seeds: BTreeMap<String, u64>,
    pub counts: BTreeMap<String, i64>,
    pub values: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub resolved_config: String,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            ..Default::default()
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), AppError> {
        self.inputs.push(digest_entry(path)?);
        Ok(())
    }

    pub fn add_inputs(&mut self, paths: &[PathBuf]) -> Result<(), AppError> {
        for p in paths {
            self.add_input(p)?;
        }
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<(), AppError> {
        self.outputs.push(digest_entry(path)?);
        Ok(())
    }

    pub fn add_outputs(&mut self, paths: &[PathBuf]) -> Result<(), AppError> {
        for p in paths {
            self.add_output(p)?;
        }
        Ok(())
    }

    /// Serialize to `manifest.toml` inside `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, AppError> {
        std::fs::create_dir_all(dir)?;
        let text = toml::to_string_pretty(self)
            .map_err(|e| AppError::data(format!("cannot serialize manifest: {e}")))?;
        let path = dir.join("manifest.toml");
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

pub fn sha256_hex(path: &Path) -> Result<String, AppError> {
    let bytes = std::fs::read(path)
        .map_err(|e| AppError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    Ok(hex)
}

fn digest_entry(path: &Path) -> Result<FileDigest, AppError> {
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(path)?,
    })
}
