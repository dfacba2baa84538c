//! Config loading with `--set key=value` overrides on the TOML tree.

use std::path::Path;

use serde::de::DeserializeOwned;
use toml::Value;

use crate::errors::AppError;

/// Load a TOML config, apply dotted-path overrides, deserialize, and return
/// the resolved config together with its canonical TOML text (echoed into
/// run manifests).
pub fn load_config<T: DeserializeOwned>(
    path: &Path,
    sets: &[String],
) -> Result<(T, String), AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| AppError::usage(format!("bad TOML in {}: {e}", path.display())))?;
    let mut value = Value::Table(table);
    for set in sets {
        apply_set(&mut value, set)?;
    }
    let resolved = toml::to_string_pretty(&value)
        .map_err(|e| AppError::usage(format!("cannot render resolved config: {e}")))?;
    let config: T = value
        .try_into()
        .map_err(|e| AppError::usage(format!("invalid config {}: {e}", path.display())))?;
    Ok((config, resolved))
}

fn apply_set(root: &mut Value, set: &str) -> Result<(), AppError> {
    let (key, raw) = set
        .split_once('=')
        .ok_or_else(|| AppError::usage(format!("--set expects KEY=VALUE, got '{set}'")))?;
    // Parse the value through a scratch TOML document so numbers, booleans,
    // and arrays keep their types; anything unparseable is a string.
    let parsed: Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => Value::String(raw.to_string()),
    };

    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| AppError::usage(format!("--set {key}: '{part}' is not a table")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Default::default()));
    }
    unreachable!("key split yields at least one part");
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Deserialize)]
    struct Sample {
        seed: u64,
        inner: Inner,
    }

    #[derive(Debug, Deserialize)]
    struct Inner {
        rate: f64,
        label: String,
    }

    #[test]
    fn overrides_replace_nested_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 1\n[inner]\nrate = 0.5\nlabel = \"a\"\n").unwrap();
        let (cfg, resolved) = load_config::<Sample>(
            &path,
            &["seed=9".into(), "inner.rate=0.25".into(), "inner.label=b".into()],
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.inner.rate, 0.25);
        assert_eq!(cfg.inner.label, "b");
        assert!(resolved.contains("seed = 9"));
    }

    #[test]
    fn malformed_set_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 1\n[inner]\nrate = 0.5\nlabel = \"a\"\n").unwrap();
        let err = load_config::<Sample>(&path, &["seed9".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn missing_config_is_a_usage_error() {
        let err = load_config::<Sample>(Path::new("/nonexistent.toml"), &[]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
