//! Binary checkpoints.
//!
//! Layout: `DFCKPT01`, u64 LE header length, JSON header, raw little-endian
//! tensor data, SHA-256 of everything before it. A `<file>.json` sidecar
//! repeats the model configuration for tools that do not read the binary.

use std::fs;
use std::path::{Path, PathBuf};

use disentaforge_autograd::{Adam, DType, ParamStore, Scalar, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::net::{Ablation, Model, ModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DFCKPT01";
const DIGEST_LEN: usize = 32;
const OPTIM_PREFIX: &str = "optim.";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    step: u64,
    optimizer_steps: u64,
    model: ModelConfig,
    train: TrainConfig,
    history: Vec<LossBreakdown>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    model: &'a ModelConfig,
    ablation: Ablation,
    step: u64,
}

/// A model configuration together with resumable training state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Scalar> {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub state: TrainState<T>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn ablation(&self) -> Ablation {
        self.train.ablation
    }

    /// The model these parameters belong to; fails when `ablation` differs
    /// from the one the checkpoint was trained under.
    pub fn build_model(&self, ablation: Ablation) -> Result<Model> {
        if ablation != self.train.ablation {
            return Err(Error::invalid(format!(
                "checkpoint holds `{}` components, cannot be used as `{ablation}`",
                self.train.ablation
            )));
        }
        Model::new(self.model.clone(), ablation)
    }
}

fn dtype_name(d: DType) -> &'static str {
    match d {
        DType::F32 => "f32",
        DType::F64 => "f64",
    }
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("ckpt-{step}"))
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>, path: &Path) -> Result<()> {
    let mut tensors: Vec<(String, &Tensor<T>)> = ckpt.state.params.iter().map(|(k, v)| (k.to_string(), v)).collect();
    tensors.extend(ckpt.state.optimizer.state_tensors().map(|(k, v)| (format!("{OPTIM_PREFIX}{k}"), v)));

    let mut entries = Vec::with_capacity(tensors.len());
    let mut blob = Vec::new();
    for (name, t) in &tensors {
        entries.push(TensorEntry { name: name.clone(), shape: t.shape().to_vec(), offset: blob.len() });
        T::to_le_bytes_vec(t.data(), &mut blob);
    }
    let header = Header {
        dtype: dtype_name(T::DTYPE).to_string(),
        step: ckpt.state.step,
        optimizer_steps: ckpt.state.optimizer.steps_taken(),
        model: ckpt.model.clone(),
        train: ckpt.train.clone(),
        history: ckpt.state.history.clone(),
        tensors: entries,
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::with_capacity(16 + header.len() + blob.len() + DIGEST_LEN);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&blob);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    fs::write(path, out).map_err(|e| Error::io(path, e))?;

    let sidecar = Sidecar { model: &ckpt.model, ablation: ckpt.train.ablation, step: ckpt.state.step };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::io(&side, e))?;
    fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))
}

/// Read a checkpoint, converting stored values to `T`.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let corrupt = |why: &str| Error::io(path, format!("corrupt checkpoint: {why}"));
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 + DIGEST_LEN || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic or truncated file"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let header_len = u64::from_le_bytes(body[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize.checked_add(header_len).filter(|&e| e <= body.len()).ok_or_else(|| corrupt("header length"))?;
    let header: Header = serde_json::from_slice(&body[16..header_end]).map_err(|e| corrupt(&e.to_string()))?;
    let blob = &body[header_end..];
    let width = match header.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(corrupt(&format!("unknown dtype {other}"))),
    };

    let mut params = ParamStore::new();
    let mut optim = Vec::new();
    for e in &header.tensors {
        let n: usize = e.shape.iter().product();
        let end = e.offset + n * width;
        let raw = blob.get(e.offset..end).ok_or_else(|| corrupt(&format!("tensor {} out of bounds", e.name)))?;
        let values: Vec<f64> = if width == 4 {
            f32::from_le_bytes_slice(raw).into_iter().map(f64::from).collect()
        } else {
            f64::from_le_bytes_slice(raw)
        };
        let t = Tensor::<T>::from_f64(&e.shape, &values).map_err(|err| corrupt(&err.to_string()))?;
        match e.name.strip_prefix(OPTIM_PREFIX) {
            Some(k) => optim.push((k.to_string(), t)),
            None => params.insert(e.name.clone(), t),
        }
    }

    let model = Model::new(header.model.clone(), header.train.ablation)?;
    let expected = model.param_names();
    let found: Vec<String> = params.names().map(str::to_string).collect();
    if expected != found {
        return Err(Error::invalid(format!(
            "checkpoint parameters do not match a `{}` model",
            header.train.ablation
        )));
    }
    let optimizer = Adam::restore(header.train.lr, header.optimizer_steps, optim);
    let state = TrainState { step: header.step, params, optimizer, seed: header.train.seed, history: header.history };
    Ok(Checkpoint { model: header.model, train: header.train, state })
}
