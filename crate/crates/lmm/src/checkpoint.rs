//! Binary checkpoints for PPO agents and decision transformers.
//!
//! Layout: the magic bytes `LMMCKPT1`, a little-endian `u32` header length,
//! a JSON header, a little-endian `u64` parameter count and the parameters
//! as little-endian `f64`. The header carries the model kind, its shape
//! description (including observation normalizers), the environment config
//! hash, the training step count and a SHA-256 of the parameter bytes.

use std::fs;
use std::path::Path;

use lmm_core::dt::DtModel;
use lmm_core::nn::{ActionAdapter, NetShape, PolicyParams};
use lmm_core::ppo::{ObsPipeline, PpoAgent};
use lmm_core::Environment;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"LMMCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ppo,
    Dt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    pub version: u32,
    pub env_hash: String,
    pub steps: usize,
    pub model: serde_json::Value,
    pub params_sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
}

fn params_bytes(params: &[f64]) -> Vec<u8> {
    params.iter().flat_map(|x| x.to_le_bytes()).collect()
}

impl Checkpoint {
    pub fn new(kind: ModelKind, env_hash: &str, steps: usize, model: serde_json::Value, params: Vec<f64>) -> Self {
        let params_sha256 = hex::encode(Sha256::digest(params_bytes(&params)));
        let header =
            CheckpointHeader { kind, version: FORMAT_VERSION, env_hash: env_hash.to_string(), steps, model, params_sha256 };
        Self { header, params }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(24 + header.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        out.extend(params_bytes(&self.params));
        out
    }

    /// Parses and verifies a checkpoint; the error string says what is wrong.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let take = |at: usize, n: usize| bytes.get(at..at + n).ok_or_else(|| "truncated file".to_string());
        if take(0, 8)? != MAGIC {
            return Err("bad magic bytes".into());
        }
        let hlen = u32::from_le_bytes(take(8, 4)?.try_into().unwrap()) as usize;
        let header: CheckpointHeader =
            serde_json::from_slice(take(12, hlen)?).map_err(|e| format!("unreadable header: {e}"))?;
        if header.version != FORMAT_VERSION {
            return Err(format!("unsupported version {}", header.version));
        }
        let at = 12 + hlen;
        let count = u64::from_le_bytes(take(at, 8)?.try_into().unwrap()) as usize;
        let body = take(at + 8, count.checked_mul(8).ok_or("parameter count overflows")?)?;
        if bytes.len() != at + 8 + body.len() {
            return Err("trailing bytes after parameters".into());
        }
        if hex::encode(Sha256::digest(body)) != header.params_sha256 {
            return Err("parameter checksum mismatch".into());
        }
        let params = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { header, params })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| CliError::CorruptCheckpoint { path: path.to_path_buf(), reason })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PpoModel {
    shape: NetShape,
    pipeline: ObsPipeline,
    categorical_max: usize,
}

pub fn ppo_checkpoint(agent: &PpoAgent, categorical_max: usize, env_hash: &str, steps: usize) -> Checkpoint {
    let model = PpoModel { shape: agent.params.shape.clone(), pipeline: agent.pipeline.clone(), categorical_max };
    let model = serde_json::to_value(model).expect("model serializes");
    Checkpoint::new(ModelKind::Ppo, env_hash, steps, model, agent.params.flat.clone())
}

/// Rebuilds a deterministic agent; the action adapter comes from `env`.
pub fn ppo_from_checkpoint<E: Environment + ?Sized>(ck: &Checkpoint, env: &E, path: &Path) -> CliResult<PpoAgent> {
    let corrupt = |reason: String| CliError::CorruptCheckpoint { path: path.to_path_buf(), reason };
    if ck.header.kind != ModelKind::Ppo {
        return Err(corrupt("not a PPO checkpoint".into()));
    }
    let m: PpoModel = serde_json::from_value(ck.header.model.clone()).map_err(|e| corrupt(format!("model: {e}")))?;
    if m.shape.param_count() != ck.params.len() {
        return Err(corrupt(format!("shape needs {} parameters, file has {}", m.shape.param_count(), ck.params.len())));
    }
    let adapter = ActionAdapter::new(env.action_layout(), m.categorical_max);
    if adapter.output_len() != m.shape.policy_out || m.pipeline.input_len() != m.shape.obs_dim {
        return Err(corrupt("network does not match the environment".into()));
    }
    let params = PolicyParams { shape: m.shape, flat: ck.params.clone() };
    Ok(PpoAgent::new(params, m.pipeline, adapter, true))
}

pub fn dt_checkpoint(model: &DtModel, env_hash: &str, steps: usize) -> Checkpoint {
    let mut v = serde_json::to_value(model).expect("model serializes");
    v.as_object_mut().expect("struct").remove("flat");
    Checkpoint::new(ModelKind::Dt, env_hash, steps, v, model.flat.clone())
}

pub fn dt_from_checkpoint(ck: &Checkpoint, path: &Path) -> CliResult<DtModel> {
    let corrupt = |reason: String| CliError::CorruptCheckpoint { path: path.to_path_buf(), reason };
    if ck.header.kind != ModelKind::Dt {
        return Err(corrupt("not a decision-transformer checkpoint".into()));
    }
    let mut v = ck.header.model.clone();
    v.as_object_mut()
        .ok_or_else(|| corrupt("model is not an object".into()))?
        .insert("flat".into(), serde_json::Value::Array(Vec::new()));
    let mut model: DtModel = serde_json::from_value(v).map_err(|e| corrupt(format!("model: {e}")))?;
    model.flat = ck.params.clone();
    if model.param_count() != model.flat.len() {
        return Err(corrupt(format!("shape needs {} parameters, file has {}", model.param_count(), model.flat.len())));
    }
    Ok(model)
}
