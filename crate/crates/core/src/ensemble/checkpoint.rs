//! Checkpoint container.
//!
//! Layout: the 8-byte magic `ENSDRCKP`, a little-endian `u64` header length,
//! a UTF-8 JSON header, then the tensors as contiguous little-endian `f32`
//! data at the offsets recorded in the header.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use super::{EnsembleConfig, EnsembleModel};
use crate::backbones::FreezePolicy;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"ENSDRCKP";

/// Non-weight payload carried alongside the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub class_names: Vec<String>,
    /// Metric snapshot at save time, if any.
    pub metrics: Option<serde_json::Value>,
}

impl Default for CheckpointMeta {
    fn default() -> Self {
        Self { class_names: crate::default_class_names(), metrics: None }
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: EnsembleConfig,
    init_seed: u64,
    freeze: Vec<FreezePolicy>,
    #[serde(flatten)]
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(model: &EnsembleModel, path: &Path) -> Result<()> {
    save_checkpoint_with_meta(model, path, &CheckpointMeta::default())
}

pub fn save_checkpoint_with_meta(model: &EnsembleModel, path: &Path, meta: &CheckpointMeta) -> Result<()> {
    let mut entries = Vec::new();
    let mut data: Vec<u8> = Vec::new();
    for (name, var) in model.named_vars() {
        let values = var.as_tensor().flatten_all()?.to_vec1::<f32>()?;
        let offset = data.len() as u64;
        for v in &values {
            data.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(TensorEntry { name, shape: var.dims().to_vec(), offset, len: values.len() as u64 });
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        init_seed: model.init_seed(),
        freeze: model.freeze_policies(),
        meta: meta.clone(),
        tensors: entries,
    };
    let json = serde_json::to_vec(&header)?;

    let io = |e| Error::io(path, e);
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    file.write_all(MAGIC).map_err(io)?;
    file.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    file.write_all(&json).map_err(io)?;
    file.write_all(&data).map_err(io)?;
    file.flush().map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<EnsembleModel> {
    Ok(load_checkpoint_with_meta(path)?.0)
}

pub fn load_checkpoint_with_meta(path: &Path) -> Result<(EnsembleModel, CheckpointMeta)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |message: String| Error::CorruptCheckpoint { path: path.to_path_buf(), message };
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing magic bytes".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if header_len > body.len() {
        return Err(corrupt(format!("header length {header_len} exceeds file size")));
    }
    let raw: serde_json::Value =
        serde_json::from_slice(&body[..header_len]).map_err(|e| corrupt(format!("header: {e}")))?;
    let version = raw.get("format_version").and_then(|v| v.as_u64()).ok_or_else(|| corrupt("no format_version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::CheckpointVersion { found: version as u32, expected: FORMAT_VERSION });
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| corrupt(format!("header: {e}")))?;
    let data = &body[header_len..];

    let mut tensors = HashMap::new();
    for entry in &header.tensors {
        let start = entry.offset as usize;
        let end = start + entry.len as usize * 4;
        if end > data.len() || entry.shape.iter().product::<usize>() != entry.len as usize {
            return Err(corrupt(format!("tensor `{}` is truncated or misshapen", entry.name)));
        }
        let values: Vec<f32> =
            data[start..end].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        tensors.insert(entry.name.clone(), Tensor::from_vec(values, entry.shape.as_slice(), &Device::Cpu)?);
    }

    let model = EnsembleModel::build(&header.config, header.init_seed, true)?;
    for (name, var) in model.named_vars() {
        let t = tensors.remove(&name).ok_or_else(|| corrupt(format!("missing tensor `{name}`")))?;
        if t.dims() != var.dims() {
            return Err(corrupt(format!("tensor `{name}` has shape {:?}, expected {:?}", t.dims(), var.dims())));
        }
        var.set(&t)?;
    }
    if model.freeze_policies() != header.freeze {
        return Err(corrupt("freeze policy differs from the embedded configuration".into()));
    }
    Ok((model, header.meta))
}
