use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndgrad::{AdamConfig, ParamSet, Tensor};
use crate::posenet::{init_params, ModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EPC1";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 16;

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub params: ParamSet<f32>,
    pub optimizer: AdamConfig,
    /// Completed epochs.
    pub epoch: usize,
    /// Mean training loss of every completed epoch.
    pub loss_history: Vec<f64>,
    pub best_loss: Option<f64>,
    /// Seed of the per-epoch and per-clip random streams.
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offsets of value, first and second moment within the payload.
    offsets: [u64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerEntry {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RngEntry {
    seed: u64,
    next_epoch: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    model: ModelConfig,
    optimizer: OptimizerEntry,
    epoch: usize,
    best_loss: Option<f64>,
    loss_history: Vec<f64>,
    rng: RngEntry,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors = Vec::with_capacity(self.params.len());
        let mut offset = 0u64;
        for p in self.params.iter() {
            let bytes = 4 * p.value.numel() as u64;
            tensors.push(TensorEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                offsets: [offset, offset + bytes, offset + 2 * bytes],
            });
            offset += 3 * bytes;
        }
        let o = &self.optimizer;
        let manifest = Manifest {
            model: self.model.clone(),
            optimizer: OptimizerEntry {
                lr: o.lr,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
                weight_decay: o.weight_decay,
                step: self.params.step,
            },
            epoch: self.epoch,
            best_loss: self.best_loss,
            loss_history: self.loss_history.clone(),
            rng: RngEntry {
                seed: self.seed,
                next_epoch: self.epoch,
            },
            tensors,
        };
        let text = serde_json::to_vec(&manifest).expect("manifest serialises");
        let mut out = Vec::with_capacity(HEADER_LEN as usize + text.len() + offset as usize);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(&text);
        for p in self.params.iter() {
            for buf in [p.value.data(), &p.m, &p.v] {
                for x in buf {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    /// Parses a checkpoint. With `expected`, every tensor must also match the
    /// shapes that configuration would create.
    pub fn from_bytes(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::format_at_offset(0, "not an EPC1 checkpoint (bad magic)"));
        }
        if bytes.len() < HEADER_LEN as usize {
            return Err(Error::format_at_offset(4, "truncated header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::format_at_offset(
                4,
                format!("unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"),
            ));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let end = HEADER_LEN
            .checked_add(len)
            .filter(|&e| e <= bytes.len() as u64)
            .ok_or_else(|| Error::format_at_offset(8, format!("manifest length {len} overruns the file")))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[HEADER_LEN as usize..end as usize])
            .map_err(|e| Error::format_at_offset(HEADER_LEN, format!("corrupt manifest: {e}")))?;
        manifest
            .model
            .validate()
            .map_err(|e| Error::format_at_offset(HEADER_LEN, format!("manifest model config: {e}")))?;

        let template = init_params::<f32>(expected.unwrap_or(&manifest.model), 0)?;
        if template.len() != manifest.tensors.len() {
            return Err(Error::format_at_offset(
                HEADER_LEN,
                format!(
                    "checkpoint holds {} tensors, configuration needs {}",
                    manifest.tensors.len(),
                    template.len()
                ),
            ));
        }
        let payload = &bytes[end as usize..];
        let mut params = ParamSet::new();
        let mut expected_len = 0u64;
        for (i, t) in manifest.tensors.iter().enumerate() {
            let want = template.iter().nth(i).filter(|p| p.name == t.name).ok_or_else(|| {
                Error::format_at_offset(HEADER_LEN, format!("unexpected tensor `{}` at position {i}", t.name))
            })?;
            if want.value.shape() != t.shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    name: t.name.clone(),
                    expected: want.value.shape().to_vec(),
                    found: t.shape.clone(),
                });
            }
            let n = t.shape.iter().product::<usize>();
            let read = |off: u64| -> Result<Vec<f32>> {
                let start = off as usize;
                let stop = start + 4 * n;
                let raw = payload.get(start..stop).ok_or_else(|| {
                    Error::format_at_offset(end + off, format!("payload of `{}` is truncated", t.name))
                })?;
                Ok(raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect())
            };
            let value = Tensor::new(t.shape.clone(), read(t.offsets[0])?)?;
            params.insert(&t.name, value)?;
            let p = params.get_mut(&t.name).expect("just inserted");
            p.m = read(t.offsets[1])?;
            p.v = read(t.offsets[2])?;
            expected_len = expected_len.max(t.offsets[2] + 4 * n as u64);
        }
        if payload.len() as u64 != expected_len {
            return Err(Error::format_at_offset(
                end,
                format!("payload is {} bytes, manifest describes {expected_len}", payload.len()),
            ));
        }
        params.step = manifest.optimizer.step;
        let o = manifest.optimizer;
        Ok(Checkpoint {
            model: manifest.model,
            params,
            optimizer: AdamConfig {
                lr: o.lr,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
                weight_decay: o.weight_decay,
            },
            epoch: manifest.epoch,
            loss_history: manifest.loss_history,
            best_loss: manifest.best_loss,
            seed: manifest.rng.seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes, expected)
    }
}
