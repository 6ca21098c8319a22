//! Checkpoint files: a JSON manifest line (names, shapes, dtype, config
//! hash, free-form metadata) followed by the raw little-endian arrays in
//! manifest order.

use super::{Scalar, Tensor};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub config_hash: String,
    /// Free-form metadata (model config, optimizer step, ...).
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("missing or invalid checkpoint manifest: {0}")]
    Manifest(String),
    #[error("checkpoint stores {found} but {expected} was requested")]
    DtypeMismatch { found: String, expected: String },
    #[error("checkpoint schema version {found} is not the supported {expected}")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("file ends inside tensor {name}")]
    Truncated { name: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Writes named tensors to `path` in manifest order.
pub fn write_checkpoint<S: Scalar>(
    path: &Path,
    config_hash: &str,
    meta: serde_json::Value,
    tensors: &[(&str, &Tensor<S>)],
) -> Result<(), CheckpointError> {
    let manifest = CheckpointManifest {
        format: "modlab-checkpoint".to_string(),
        version: CHECKPOINT_FORMAT_VERSION,
        dtype: S::DTYPE.to_string(),
        config_hash: config_hash.to_string(),
        meta,
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    let header = serde_json::to_string(&manifest).expect("manifest serializes");
    w.write_all(header.as_bytes())?;
    w.write_all(b"\n")?;
    let mut buf = Vec::new();
    for (_, tensor) in tensors {
        buf.clear();
        buf.reserve(tensor.len() * S::BYTES);
        for &v in tensor.data() {
            v.write_le(&mut buf);
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint written by [`write_checkpoint`] with the same scalar
/// type.
pub fn read_checkpoint<S: Scalar>(
    path: &Path,
) -> Result<(CheckpointManifest, Vec<(String, Tensor<S>)>), CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        match r.read(&mut byte)? {
            0 => return Err(CheckpointError::Manifest("missing newline".into())),
            _ if byte[0] == b'\n' => break,
            _ => header.push(byte[0]),
        }
        if header.len() > 1 << 20 {
            return Err(CheckpointError::Manifest("manifest line too long".into()));
        }
    }
    let manifest: CheckpointManifest =
        serde_json::from_slice(&header).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    if manifest.format != "modlab-checkpoint" {
        return Err(CheckpointError::Manifest(format!(
            "unexpected format tag {:?}",
            manifest.format
        )));
    }
    if manifest.version != CHECKPOINT_FORMAT_VERSION {
        return Err(CheckpointError::SchemaVersion {
            found: manifest.version,
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    if manifest.dtype != S::DTYPE {
        return Err(CheckpointError::DtypeMismatch {
            found: manifest.dtype.clone(),
            expected: S::DTYPE.to_string(),
        });
    }

    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let len: usize = entry.shape.iter().product();
        let mut bytes = vec![0u8; len * S::BYTES];
        r.read_exact(&mut bytes).map_err(|_| CheckpointError::Truncated {
            name: entry.name.clone(),
        })?;
        let data: Vec<S> = bytes
            .chunks_exact(S::BYTES)
            .map(|chunk| S::read_le(chunk))
            .collect();
        tensors.push((entry.name.clone(), Tensor::new(entry.shape.clone(), data)));
    }
    Ok((manifest, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let a = Tensor::<f32>::new(vec![2, 3], vec![1.0, -0.5, 3.25, 0.0, f32::MIN, f32::MAX]);
        let b = Tensor::<f32>::new(vec![3], vec![0.1, 0.2, 0.3]);
        write_checkpoint(
            &path,
            "cafebabe",
            serde_json::json!({"step": 7}),
            &[("w", &a), ("bias", &b)],
        )
        .unwrap();
        let (manifest, tensors) = read_checkpoint::<f32>(&path).unwrap();
        assert_eq!(manifest.config_hash, "cafebabe");
        assert_eq!(manifest.meta["step"], 7);
        assert_eq!(tensors.len(), 2);
        assert_eq!(tensors[0].0, "w");
        assert_eq!(tensors[0].1, a);
        assert_eq!(tensors[1].1, b);
    }

    #[test]
    fn dtype_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let a = Tensor::<f32>::new(vec![1], vec![1.0]);
        write_checkpoint(&path, "h", serde_json::Value::Null, &[("w", &a)]).unwrap();
        assert!(matches!(
            read_checkpoint::<f64>(&path),
            Err(CheckpointError::DtypeMismatch { .. })
        ));
    }

    #[test]
    fn truncation_names_the_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let a = Tensor::<f32>::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]);
        write_checkpoint(&path, "h", serde_json::Value::Null, &[("w", &a)]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        match read_checkpoint::<f32>(&path) {
            Err(CheckpointError::Truncated { name }) => assert_eq!(name, "w"),
            other => panic!("expected truncation, got {other:?}"),
        }
    }
}
