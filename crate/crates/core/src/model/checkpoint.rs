//! Checkpoint directories: `manifest.json` plus a little-endian f32 payload.

use super::params::{ParameterStore, Tensor};
use super::{ModelConfig, ModelError};
use crate::sha256_hex;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const PAYLOAD: &str = "params.bin";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: ModelConfig,
    dtype: String,
    payload_bytes: usize,
    payload_sha256: String,
    tensors: Vec<TensorEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `dir/manifest.json` and `dir/params.bin`, creating `dir` if needed.
pub fn save_checkpoint(params: &ParameterStore<f32>, dir: impl AsRef<Path>) -> Result<PathBuf, ModelError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut payload = Vec::with_capacity(params.num_parameters() * 4);
    let mut tensors = Vec::new();
    for t in params.tensors() {
        if let Some(_bad) = t.data.iter().find(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite { tensor: t.name.clone() });
        }
        tensors.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset: payload.len(),
        });
        for x in &t.data {
            payload.extend_from_slice(&x.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format_version: CHECKPOINT_VERSION,
        config: params.config().clone(),
        dtype: "f32le".into(),
        payload_bytes: payload.len(),
        payload_sha256: sha256_hex(&payload),
        tensors,
    };
    let payload_path = dir.join(PAYLOAD);
    std::fs::write(&payload_path, &payload).map_err(io_err(&payload_path))?;
    let manifest_path = dir.join(MANIFEST);
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, json).map_err(io_err(&manifest_path))?;
    Ok(dir.to_path_buf())
}

/// Hex SHA-256 of a checkpoint's parameter payload.
pub fn checkpoint_digest(dir: impl AsRef<Path>) -> Result<String, ModelError> {
    let path = dir.as_ref().join(PAYLOAD);
    crate::file_digest(&path).map_err(io_err(&path))
}

fn compare(field: &'static str, have: impl ToString, want: impl ToString) -> Result<(), ModelError> {
    let (have, want) = (have.to_string(), want.to_string());
    if have == want {
        Ok(())
    } else {
        Err(ModelError::ConfigMismatch {
            field,
            checkpoint: have,
            requested: want,
        })
    }
}

fn check_config(have: &ModelConfig, want: &ModelConfig) -> Result<(), ModelError> {
    compare("d_model", have.d_model, want.d_model)?;
    compare("n_heads", have.n_heads, want.n_heads)?;
    compare("n_enc_layers", have.n_enc_layers, want.n_enc_layers)?;
    compare("n_dec_layers", have.n_dec_layers, want.n_dec_layers)?;
    compare("d_ffn", have.d_ffn, want.d_ffn)?;
    compare("max_seq_len", have.max_seq_len, want.max_seq_len)?;
    compare("vocab_size", have.vocab_size, want.vocab_size)
}

/// Loads a checkpoint. With `expected`, every architectural field must agree;
/// the dropout rate is taken from `expected`.
pub fn load_checkpoint(
    dir: impl AsRef<Path>,
    expected: Option<&ModelConfig>,
) -> Result<(ParameterStore<f32>, ModelConfig), ModelError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let raw = std::fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest =
        serde_json::from_slice(&raw).map_err(|e| ModelError::Manifest(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(ModelError::Manifest(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    if manifest.dtype != "f32le" {
        return Err(ModelError::Manifest(format!("unsupported dtype {}", manifest.dtype)));
    }
    let mut config = manifest.config.clone();
    if let Some(want) = expected {
        check_config(&config, want)?;
        config.dropout_rate = want.dropout_rate;
    }
    let payload_path = dir.join(PAYLOAD);
    let payload = std::fs::read(&payload_path).map_err(io_err(&payload_path))?;
    if payload.len() != manifest.payload_bytes {
        return Err(ModelError::Manifest(format!(
            "{} has {} bytes, manifest expects {}",
            payload_path.display(),
            payload.len(),
            manifest.payload_bytes
        )));
    }
    if sha256_hex(&payload) != manifest.payload_sha256 {
        return Err(ModelError::Manifest(format!("{} digest mismatch", payload_path.display())));
    }
    let reference = ParameterStore::<f32>::zeros(&config)?;
    if manifest.tensors.len() != reference.tensors().len() {
        return Err(ModelError::Manifest(format!(
            "manifest lists {} tensors, config implies {}",
            manifest.tensors.len(),
            reference.tensors().len()
        )));
    }
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for (entry, want) in manifest.tensors.iter().zip(reference.tensors()) {
        if entry.name != want.name {
            return Err(ModelError::Manifest(format!(
                "tensor {} found where {} was expected",
                entry.name, want.name
            )));
        }
        if entry.shape != want.shape {
            return Err(ModelError::ShapeMismatch {
                tensor: entry.name.clone(),
                expected: want.shape.clone(),
                found: entry.shape.clone(),
            });
        }
        let bytes = want.numel() * 4;
        let chunk = payload
            .get(entry.offset..entry.offset + bytes)
            .ok_or_else(|| ModelError::Manifest(format!("tensor {} lies outside the payload", entry.name)))?;
        let data: Vec<f32> = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite {
                tensor: entry.name.clone(),
            });
        }
        tensors.push(Tensor {
            name: entry.name.clone(),
            shape: entry.shape.clone(),
            data,
        });
    }
    let params = ParameterStore::from_tensors(&config, tensors)?;
    Ok((params, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward_loss, Seq2Seq};

    fn cfg(heads: usize) -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: heads,
            n_enc_layers: 1,
            n_dec_layers: 1,
            d_ffn: 24,
            max_seq_len: 8,
            vocab_size: 30,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = ParameterStore::<f32>::init(&cfg(4), 5).unwrap();
        save_checkpoint(&p, dir.path()).unwrap();
        let (q, c) = load_checkpoint(dir.path(), None).unwrap();
        assert_eq!(&c, p.config());
        let b = vec![Seq2Seq::new(vec![5, 6, 7], &[8, 9]), Seq2Seq::new(vec![20], &[29, 4, 4])];
        let (l1, _) = forward_loss(&p, &b, None).unwrap();
        let (l2, _) = forward_loss(&q, &b, None).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = ParameterStore::<f32>::init(&cfg(4), 5).unwrap();
        save_checkpoint(&p, dir.path()).unwrap();
        let path = dir.path().join(PAYLOAD);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(load_checkpoint(dir.path(), None), Err(ModelError::Manifest(_))));
        std::fs::write(dir.path().join(MANIFEST), b"{\"format_version\":").unwrap();
        assert!(matches!(load_checkpoint(dir.path(), None), Err(ModelError::Manifest(_))));
    }

    #[test]
    fn head_count_mismatch_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let p = ParameterStore::<f32>::init(&cfg(4), 5).unwrap();
        save_checkpoint(&p, dir.path()).unwrap();
        let err = load_checkpoint(dir.path(), Some(&cfg(8))).unwrap_err();
        assert!(matches!(err, ModelError::ConfigMismatch { field: "n_heads", .. }));
        assert!(err.to_string().contains("n_heads"));
    }

    #[test]
    fn shape_mismatch_names_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let p = ParameterStore::<f32>::init(&cfg(4), 5).unwrap();
        save_checkpoint(&p, dir.path()).unwrap();
        let path = dir.path().join(MANIFEST);
        let mut m: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        m["tensors"][3]["shape"] = serde_json::json!([2, 2]);
        std::fs::write(&path, serde_json::to_vec(&m).unwrap()).unwrap();
        let err = load_checkpoint(dir.path(), None).unwrap_err();
        let name = p.tensors()[3].name.clone();
        assert!(matches!(&err, ModelError::ShapeMismatch { tensor, .. } if *tensor == name));
    }
}
