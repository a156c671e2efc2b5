//! GNN weights file.
//!
//! ```text
//! [u64 LE: header length H][H bytes: JSON header][blob: f64 LE values]
//! ```
//!
//! The header lists every tensor with its shape and byte offset into the
//! blob, the network configuration, the SHA-256 of the blob and free-form
//! training metadata. Tensors are stored in canonical order (see
//! [`GnnConfig::tensor_specs`]) but readers only rely on names and offsets.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use olpkit_core::gnn::{GnnConfig, GnnWeights};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::sha256_hex;

pub const WEIGHTS_FORMAT_VERSION: &str = "olpkit-weights/1";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed weights header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("unsupported weights format version `{found}` (expected `{WEIGHTS_FORMAT_VERSION}`)")]
    Version { found: String },
    #[error("weights file is truncated: {0}")]
    Truncated(String),
    #[error("weights blob checksum mismatch: header has {expected}, blob hashes to {found}")]
    Checksum { expected: String, found: String },
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unexpected parameter `{0}`")]
    UnexpectedParameter(String),
    #[error("parameter `{0}` is listed more than once")]
    DuplicateParameter(String),
    #[error("invalid weights: {0}")]
    Invalid(String),
}

pub type Result<T, E = WeightsError> = std::result::Result<T, E>;

impl From<olpkit_core::Error> for WeightsError {
    fn from(e: olpkit_core::Error) -> Self {
        use olpkit_core::Error as E;
        match e {
            E::MissingParameter(n) => Self::MissingParameter(n),
            E::ShapeMismatch(s) => Self::ShapeMismatch(s),
            E::UnexpectedParameter(n) => Self::UnexpectedParameter(n),
            other => Self::Invalid(other.to_string()),
        }
    }
}

/// Training summary carried along with the weights; every field optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingMetadata {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_val_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub datasets: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub created_by: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsHeader {
    pub format_version: String,
    pub config: GnnConfig,
    pub tensors: Vec<TensorEntry>,
    pub blob_sha256: String,
    #[serde(default)]
    pub training: TrainingMetadata,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightsArtifact {
    pub weights: GnnWeights,
    pub training: TrainingMetadata,
}

/// Serializes an artifact into the on-disk byte layout.
pub fn encode_weights(artifact: &WeightsArtifact) -> Vec<u8> {
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    for (spec, data) in artifact.weights.named_tensors() {
        tensors.push(TensorEntry {
            name: spec.name,
            shape: spec.shape,
            offset: blob.len() as u64,
        });
        for v in data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = WeightsHeader {
        format_version: WEIGHTS_FORMAT_VERSION.into(),
        config: artifact.weights.config,
        tensors,
        blob_sha256: sha256_hex(&blob),
        training: artifact.training.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + blob.len());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    out
}

/// Splits the file into header and blob, checking the version first.
pub fn decode_header(bytes: &[u8]) -> Result<(WeightsHeader, &[u8])> {
    let len_bytes: [u8; 8] = bytes
        .get(..8)
        .ok_or_else(|| WeightsError::Truncated("no header length".into()))?
        .try_into()
        .expect("8 bytes");
    let len = u64::from_le_bytes(len_bytes);
    let end = usize::try_from(len)
        .ok()
        .and_then(|l| l.checked_add(8))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| WeightsError::Truncated(format!("header claims {len} bytes, file has {}", bytes.len() - 8)))?;
    let raw: serde_json::Value = serde_json::from_slice(&bytes[8..end])?;
    let version = raw.get("format_version").and_then(|v| v.as_str()).unwrap_or("<missing>");
    if version != WEIGHTS_FORMAT_VERSION {
        return Err(WeightsError::Version {
            found: version.to_string(),
        });
    }
    Ok((serde_json::from_value(raw)?, &bytes[end..]))
}

pub fn decode_weights(bytes: &[u8]) -> Result<WeightsArtifact> {
    let (header, blob) = decode_header(bytes)?;
    let found = sha256_hex(blob);
    if !header.blob_sha256.eq_ignore_ascii_case(&found) {
        return Err(WeightsError::Checksum {
            expected: header.blob_sha256,
            found,
        });
    }
    let mut tensors = BTreeMap::new();
    for t in &header.tensors {
        let count: usize = t.shape.iter().product();
        let start = usize::try_from(t.offset).unwrap_or(usize::MAX);
        let end = start.checked_add(count * 8).unwrap_or(usize::MAX);
        let data = blob.get(start..end).ok_or_else(|| {
            WeightsError::Truncated(format!(
                "`{}` spans bytes {start}..{end} of a {}-byte blob",
                t.name,
                blob.len()
            ))
        })?;
        let values = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if tensors.insert(t.name.clone(), (t.shape.clone(), values)).is_some() {
            return Err(WeightsError::DuplicateParameter(t.name.clone()));
        }
    }
    let weights = GnnWeights::from_named_tensors(header.config, tensors)?;
    Ok(WeightsArtifact {
        weights,
        training: header.training,
    })
}

pub fn write_weights(path: &Path, artifact: &WeightsArtifact) -> Result<()> {
    fs::write(path, encode_weights(artifact)).map_err(|source| WeightsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_weights(path: &Path) -> Result<WeightsArtifact> {
    let bytes = fs::read(path).map_err(|source| WeightsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_weights(&bytes)
}

/// Re-encodes `header` in front of `blob`; used to build deliberately
/// inconsistent files.
pub fn assemble(header: &WeightsHeader, blob: &[u8]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = (json.len() as u64).to_le_bytes().to_vec();
    out.extend_from_slice(&json);
    out.extend_from_slice(blob);
    out
}
