//! Checkpoint container.
//!
//! Layout: the 8-byte magic `SEMFICKP`, a little-endian `u64` header length,
//! a UTF-8 JSON header (configs plus a manifest of name, shape, dtype, and
//! byte offset), then little-endian `f32` blobs in manifest order. Offsets
//! count from the first blob byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SemfiError};
use crate::mol::{MoLState, MolConfig};
use crate::nn::Tensor;
use crate::rng::SeedStream;

use super::config::DenoiserConfig;
use super::denoiser::{lora_layer_shapes, Denoiser};
use super::params::ParamStore;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SEMFICKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub dtype: String,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub model: DenoiserConfig,
    pub mol: Option<MolConfig>,
    #[serde(default)]
    pub extra: serde_json::Value,
    pub params: Vec<ParamEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Denoiser<f32>,
    pub mol: Option<(MolConfig, MoLState<f32>)>,
    /// Free-form provenance (experiment config, loss summary).
    pub extra: serde_json::Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors: Vec<(String, &Tensor<f32>)> =
            self.model.params.iter().map(|(n, t)| (format!("base/{n}"), t)).collect();
        if let Some((_, mol)) = &self.mol {
            tensors.extend(mol.named_tensors());
        }
        let mut params = Vec::with_capacity(tensors.len());
        let mut offset = 0u64;
        for (name, t) in &tensors {
            params.push(ParamEntry {
                name: name.clone(),
                shape: [t.rows, t.cols],
                dtype: "f32".into(),
                offset,
            });
            offset += 4 * t.data.len() as u64;
        }
        let header = CheckpointHeader {
            format: "semfi-checkpoint".into(),
            version: CHECKPOINT_VERSION,
            model: self.model.config.clone(),
            mol: self.mol.as_ref().map(|(c, _)| c.clone()),
            extra: self.extra.clone(),
            params,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(SemfiError::format("magic", "not a semfi checkpoint"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(16..16 + hlen)
            .ok_or_else(|| SemfiError::format("header_length", format!("{hlen} exceeds file size")))?;
        let header: CheckpointHeader =
            serde_json::from_slice(body).map_err(|e| SemfiError::format("header", e.to_string()))?;
        if header.format != "semfi-checkpoint" {
            return Err(SemfiError::format("format", header.format));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(SemfiError::format("version", format!("unsupported version {}", header.version)));
        }
        header
            .model
            .validate()
            .map_err(|e| SemfiError::format("model", e.to_string()))?;
        let blobs = &bytes[16 + hlen..];

        let mut model = Denoiser::<f32>::zeroed(header.model.clone())?;
        let mut mol = match &header.mol {
            Some(c) => {
                let m = MoLState::<f32>::new(&lora_layer_shapes(&header.model), c, SeedStream::new(0))
                    .map_err(|e| SemfiError::format("mol", e.to_string()))?;
                Some((c.clone(), m))
            }
            None => None,
        };
        let expected = model.params.len() + mol.as_ref().map_or(0, |(_, m)| m.named_tensors().len());
        if header.params.len() != expected {
            return Err(SemfiError::format(
                "params",
                format!("manifest lists {} tensors, config implies {expected}", header.params.len()),
            ));
        }
        for e in &header.params {
            if e.dtype != "f32" {
                return Err(SemfiError::format(format!("params.{}.dtype", e.name), e.dtype.clone()));
            }
            let dst: &mut Tensor<f32> = if let Some(base) = e.name.strip_prefix("base/") {
                model.params.get_mut(base)
            } else {
                mol.as_mut().and_then(|(_, m)| m.tensor_mut(&e.name))
            }
            .ok_or_else(|| SemfiError::format(format!("params.{}", e.name), "unknown tensor name"))?;
            if dst.shape() != (e.shape[0], e.shape[1]) {
                return Err(SemfiError::format(
                    format!("params.{}.shape", e.name),
                    format!("{:?} but config implies {:?}", e.shape, dst.shape()),
                ));
            }
            let start = e.offset as usize;
            let end = start + 4 * dst.data.len();
            let raw = blobs
                .get(start..end)
                .ok_or_else(|| SemfiError::format(format!("params.{}.offset", e.name), "blob out of range"))?;
            for (d, chunk) in dst.data.iter_mut().zip(raw.chunks_exact(4)) {
                *d = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            }
        }
        Ok(Checkpoint {
            model,
            mol,
            extra: header.extra,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| SemfiError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| SemfiError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Checksum over base parameters only.
pub fn base_checksum(params: &ParamStore<f32>) -> String {
    params.checksum()
}
