//! Checkpoint container: the unit of weight transfer between training
//! stages.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! offset 0   8-byte magic "GNETCKP1"
//! offset 8   u64 header length in bytes
//! offset 16  header: JSON (format_version, dtype, stage, iteration,
//!            architecture, optimizer, tensor directory sorted by name)
//! then       raw tensor data blocks, little-endian scalars, in directory
//!            order, each at the offset/len the directory records
//! ```
//!
//! Serialization is fully deterministic, so save → load → save reproduces
//! the input byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::layers::ParamSet;
use crate::network::{param_specs, ArchitectureSpec, Network, StageTag};
use crate::optim::OptimizerState;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"GNETCKP1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset of this tensor's block, in bytes from the start of the data
    /// section.
    offset: usize,
    /// Element count (bytes = len × scalar width).
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dtype: String,
    stage: StageTag,
    iteration: u64,
    architecture: ArchitectureSpec,
    optimizer: OptimizerState,
    tensors: Vec<TensorEntry>,
}

/// Named parameters + architecture + optimizer state + iteration counter,
/// tagged with the training stage that produced it.
#[derive(Debug, Clone)]
pub struct NetworkCheckpoint<S: Scalar> {
    pub arch: ArchitectureSpec,
    pub stage: StageTag,
    pub iteration: u64,
    pub optimizer: OptimizerState,
    pub params: ParamSet<S>,
}

impl<S: Scalar> NetworkCheckpoint<S> {
    pub fn from_network(
        network: &Network<S>,
        stage: StageTag,
        iteration: u64,
        optimizer: OptimizerState,
    ) -> Result<Self> {
        if stage.form() != network.form {
            return Err(CoreError::StageMismatch {
                expected: format!("{:?}", network.form),
                found: stage.to_string(),
            });
        }
        Ok(NetworkCheckpoint {
            arch: network.arch.clone(),
            stage,
            iteration,
            optimizer,
            params: network.params.clone(),
        })
    }

    /// Reconstruct the network this checkpoint captured.
    pub fn into_network(self) -> Network<S> {
        Network {
            form: self.stage.form(),
            arch: self.arch,
            params: self.params,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.params.len());
        let mut offset = 0usize;
        for (name, tensor) in self.params.iter() {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: tensor.shape.clone(),
                offset,
                len: tensor.numel(),
            });
            offset += tensor.numel() * S::BYTE_WIDTH;
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            dtype: S::DTYPE.to_string(),
            stage: self.stage,
            iteration: self.iteration,
            architecture: self.arch.clone(),
            optimizer: self.optimizer.clone(),
            tensors: entries,
        };
        let header_bytes = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + header_bytes.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        for (_, tensor) in self.params.iter() {
            for &v in &tensor.data {
                v.write_le(&mut out);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[0..8] != MAGIC {
            return Err(CoreError::CheckpointFormat(
                "missing GNETCKP1 magic".into(),
            ));
        }
        let header_len =
            u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let header_end = 16 + header_len;
        if bytes.len() < header_end {
            return Err(CoreError::CheckpointFormat("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[16..header_end])?;
        if header.format_version != FORMAT_VERSION {
            return Err(CoreError::CheckpointFormat(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        if header.dtype != S::DTYPE {
            return Err(CoreError::DtypeMismatch {
                expected: S::DTYPE,
                found: header.dtype,
            });
        }
        let data = &bytes[header_end..];
        let mut params = ParamSet::new();
        for entry in &header.tensors {
            let byte_len = entry.len * S::BYTE_WIDTH;
            let end = entry.offset + byte_len;
            if end > data.len() {
                return Err(CoreError::CheckpointFormat(format!(
                    "tensor '{}' extends past the data section",
                    entry.name
                )));
            }
            let block = &data[entry.offset..end];
            let values: Vec<S> = block
                .chunks_exact(S::BYTE_WIDTH)
                .map(S::read_le)
                .collect();
            let tensor = Tensor::new(entry.shape.clone(), values).map_err(|_| {
                CoreError::CheckpointFormat(format!(
                    "tensor '{}' shape/length mismatch",
                    entry.name
                ))
            })?;
            params.insert(entry.name.clone(), tensor);
        }
        let ckpt = NetworkCheckpoint {
            arch: header.architecture,
            stage: header.stage,
            iteration: header.iteration,
            optimizer: header.optimizer,
            params,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    /// Every parameter the architecture requires must be present with the
    /// declared shape.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        for spec in param_specs(&self.arch, self.stage.form())? {
            let tensor = self.params.get(&spec.name)?;
            if tensor.shape != spec.shape {
                return Err(CoreError::ParamShapeMismatch {
                    name: spec.name.clone(),
                    expected: spec.shape.clone(),
                    found: tensor.shape.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}
