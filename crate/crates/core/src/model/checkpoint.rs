//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "GLCKPT\0\x01"
//! header_len u64
//! header     header_len bytes of UTF-8 JSON:
//!            { "formatVersion", "config", "seed", "trainConfig",
//!              "history", "tensors": [{ "name", "len" }, ...] }
//! payload    f64 little-endian values of every tensor, in header order
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a save/load round trip is
//! bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

use super::params::{ModelConfig, ModelParams};
use super::train::{EpochMetrics, TrainConfig};

const MAGIC: &[u8; 8] = b"GLCKPT\0\x01";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model together with how it was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub seed: u64,
    pub train_config: Option<TrainConfig>,
    pub history: Vec<EpochMetrics>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Header {
    format_version: u32,
    config: ModelConfig,
    seed: u64,
    train_config: Option<TrainConfig>,
    history: Vec<EpochMetrics>,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = self.params.tensors();
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            config: self.params.config.clone(),
            seed: self.seed,
            train_config: self.train_config.clone(),
            history: self.history.clone(),
            tensors: tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    len: t.len(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).map_err(|e| CoreError::Format(e.to_string()))?;
        let payload_len: usize = tensors.iter().map(|(_, t)| t.len() * 8).sum();
        let mut out = Vec::with_capacity(16 + header.len() + payload_len);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &tensors {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: &str| CoreError::Format(msg.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(fail("not a gaitlens checkpoint (bad magic)"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| fail("truncated checkpoint header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..header_end])
            .map_err(|e| CoreError::Format(format!("checkpoint header: {e}")))?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(CoreError::Format(format!(
                "unsupported checkpoint version {}",
                header.format_version
            )));
        }
        let mut params = ModelParams::zeros(&header.config)
            .map_err(|e| CoreError::Format(format!("checkpoint config: {e}")))?;
        let mut payload = &bytes[header_end..];
        {
            let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
            let slots = params.tensors_mut();
            if slots.len() != header.tensors.len() {
                return Err(fail("tensor count does not match config"));
            }
            for ((slot, name), entry) in slots.into_iter().zip(&names).zip(&header.tensors) {
                if entry.name != *name || entry.len != slot.len() {
                    return Err(CoreError::Format(format!(
                        "tensor `{}` ({}) does not match expected `{name}` ({})",
                        entry.name,
                        entry.len,
                        slot.len()
                    )));
                }
                let need = slot.len() * 8;
                if payload.len() < need {
                    return Err(CoreError::Format(format!("truncated payload in `{name}`")));
                }
                for (v, chunk) in slot.iter_mut().zip(payload[..need].chunks_exact(8)) {
                    *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
                }
                payload = &payload[need..];
            }
        }
        if !payload.is_empty() {
            return Err(fail("trailing bytes after payload"));
        }
        Ok(Checkpoint {
            params,
            seed: header.seed,
            train_config: header.train_config,
            history: header.history,
        })
    }
}

/// Writes a checkpoint through a temporary file so readers never see a
/// partial write.
pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = checkpoint.to_bytes()?;
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
