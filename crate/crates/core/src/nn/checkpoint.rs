//! Model checkpoints: a versioned binary header, a JSON architecture
//! descriptor, and little-endian float32 parameter blobs.

use super::{LayerSpec, Model, ModelError};
use crate::signal::SignalClass;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"RTBMDL01";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a model checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint truncated or trailing bytes: {0}")]
    BadLength(String),
    #[error("checkpoint architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct Descriptor {
    input_shape: Vec<usize>,
    classes: Vec<SignalClass>,
    layers: Vec<LayerSpec>,
    param_count: usize,
}

/// Serialize a model to `path`.
pub fn save_checkpoint(path: &Path, model: &Model<f32>) -> Result<(), CheckpointError> {
    let descriptor = Descriptor {
        input_shape: model.input_shape().to_vec(),
        classes: model.classes().to_vec(),
        layers: model.specs(),
        param_count: model.num_params(),
    };
    let json = serde_json::to_vec(&descriptor)?;
    let params = model.param_vector();
    let mut bytes = Vec::with_capacity(12 + json.len() + params.len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&json);
    for p in params {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Load a checkpoint, returning the model and a short content-hash version
/// string (used as `model_version` in predictions).
pub fn load_checkpoint(path: &Path) -> Result<(Model<f32>, String), CheckpointError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let json_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let params_start = 12 + json_len;
    if bytes.len() < params_start {
        return Err(CheckpointError::BadLength("descriptor truncated".into()));
    }
    let descriptor: Descriptor = serde_json::from_slice(&bytes[12..params_start])?;

    let mut model = Model::<f32>::zeroed(
        descriptor.input_shape,
        descriptor.classes,
        descriptor.layers,
    )?;
    if descriptor.param_count != model.num_params() {
        return Err(CheckpointError::ArchitectureMismatch(format!(
            "descriptor declares {} parameters, architecture has {}",
            descriptor.param_count,
            model.num_params()
        )));
    }
    let blob = &bytes[params_start..];
    if blob.len() != model.num_params() * 4 {
        return Err(CheckpointError::BadLength(format!(
            "{} parameter bytes, expected {}",
            blob.len(),
            model.num_params() * 4
        )));
    }
    let params: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(CheckpointError::BadLength("non-finite parameter".into()));
    }
    model.load_param_vector(&params)?;

    let digest = Sha256::digest(&bytes);
    let version: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    Ok((model, version))
}
