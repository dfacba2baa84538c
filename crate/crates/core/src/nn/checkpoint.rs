//! Parameter checkpoint file format.
//!
//! A checkpoint is a UTF-8 text manifest (one `key: value` per line, then one
//! `tensor: <name> <dims...>` line per tensor in declaration order), a blank
//! line, and the raw 32-bit little-endian values of every tensor concatenated
//! in declaration order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::NnError;

const MAGIC: &str = "MSDM-CKPT v1";

/// Scalar metadata carried by a checkpoint. `extra` holds free-form keys
/// (architecture JSON, per-species training counts, ...).
#[derive(Debug, Clone, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub step: u64,
    pub epoch: u64,
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct CheckpointData {
    pub meta: CheckpointMeta,
    /// `(name, shape, values)` in declaration order.
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
}

pub fn write_checkpoint(
    path: &Path,
    meta: &CheckpointMeta,
    tensors: &[(String, Vec<usize>, &[f32])],
) -> Result<(), NnError> {
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!("seed: {}\n", meta.seed));
    header.push_str(&format!("step: {}\n", meta.step));
    header.push_str(&format!("epoch: {}\n", meta.epoch));
    for (k, v) in &meta.extra {
        debug_assert!(!v.contains('\n'), "checkpoint meta values must be single-line");
        header.push_str(&format!("{k}: {v}\n"));
    }
    for (name, shape, values) in tensors {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        header.push_str(&format!("tensor: {name} {}\n", dims.join(" ")));
    }
    header.push('\n');

    let mut bytes = header.into_bytes();
    for (_, _, values) in tensors {
        for v in *values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointData, NnError> {
    let bytes = fs::read(path)?;
    let split = find_header_end(&bytes)
        .ok_or_else(|| NnError::Checkpoint("missing blank line after header".into()))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| NnError::Checkpoint("header is not UTF-8".into()))?;
    let data = &bytes[split + 2..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(NnError::Checkpoint(format!("bad magic, expected '{MAGIC}'")));
    }

    let mut meta = CheckpointMeta::default();
    let mut tensor_decls: Vec<(String, Vec<usize>)> = Vec::new();
    for line in lines {
        let (key, value) = line
            .split_once(": ")
            .ok_or_else(|| NnError::Checkpoint(format!("malformed line '{line}'")))?;
        match key {
            "seed" => meta.seed = parse_u64(value)?,
            "step" => meta.step = parse_u64(value)?,
            "epoch" => meta.epoch = parse_u64(value)?,
            "tensor" => {
                let mut parts = value.split(' ');
                let name = parts
                    .next()
                    .ok_or_else(|| NnError::Checkpoint("tensor line missing name".into()))?
                    .to_string();
                let shape: Result<Vec<usize>, _> = parts.map(|d| d.parse::<usize>()).collect();
                let shape =
                    shape.map_err(|_| NnError::Checkpoint(format!("bad tensor dims in '{line}'")))?;
                tensor_decls.push((name, shape));
            }
            other => {
                meta.extra.insert(other.to_string(), value.to_string());
            }
        }
    }

    let total: usize = tensor_decls
        .iter()
        .map(|(_, s)| s.iter().product::<usize>())
        .sum();
    if data.len() != total * 4 {
        return Err(NnError::Checkpoint(format!(
            "payload size {} does not match declared {} values",
            data.len(),
            total
        )));
    }

    let mut tensors = Vec::with_capacity(tensor_decls.len());
    let mut offset = 0usize;
    for (name, shape) in tensor_decls {
        let count: usize = shape.iter().product();
        let mut values = Vec::with_capacity(count);
        for i in 0..count {
            let b = &data[(offset + i) * 4..(offset + i) * 4 + 4];
            values.push(f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        }
        offset += count;
        tensors.push((name, shape, values));
    }

    Ok(CheckpointData { meta, tensors })
}

fn find_header_end(bytes: &[u8]) -> Option<usize> {
    bytes.windows(2).position(|w| w == b"\n\n")
}

fn parse_u64(s: &str) -> Result<u64, NnError> {
    s.parse::<u64>()
        .map_err(|_| NnError::Checkpoint(format!("expected integer, got '{s}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.ckpt");
        let mut meta = CheckpointMeta {
            seed: 42,
            step: 17,
            epoch: 3,
            ..Default::default()
        };
        meta.extra.insert("pos_weight".into(), "2.5".into());
        let a = vec![1.0f32, -2.5, 3.25e-8, f32::MIN_POSITIVE];
        let b = vec![0.0f32; 6];
        write_checkpoint(
            &path,
            &meta,
            &[
                ("m0.enc.w".into(), vec![2, 2], &a),
                ("cls.b".into(), vec![6], &b),
            ],
        )
        .unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.meta.seed, 42);
        assert_eq!(back.meta.step, 17);
        assert_eq!(back.meta.extra["pos_weight"], "2.5");
        assert_eq!(back.tensors[0].2, a);
        assert_eq!(back.tensors[1].1, vec![6]);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        let meta = CheckpointMeta::default();
        let a = vec![1.0f32; 4];
        write_checkpoint(&path, &meta, &[("t".into(), vec![4], &a)]).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_checkpoint(&path),
            Err(NnError::Checkpoint(_))
        ));
    }
}
