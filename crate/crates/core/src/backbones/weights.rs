//! Local cache of pretrained ImageNet weights.
//!
//! Each backbone `<name>` is read from `<dir>/<name>.safetensors`, whose
//! SHA-256 must match the hex digest stored in `<dir>/<name>.safetensors.sha256`
//! (the first whitespace-separated token, so `sha256sum` output works).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const WEIGHTS_DIR_ENV: &str = "ENSEMBLE_DR_WEIGHTS_DIR";

/// `$ENSEMBLE_DR_WEIGHTS_DIR`, falling back to `~/.cache/ensemble-dr/weights`.
pub fn weights_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(WEIGHTS_DIR_ENV) {
        return PathBuf::from(dir);
    }
    let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    home.join(".cache").join("ensemble-dr").join("weights")
}

pub fn weights_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.safetensors"))
}

fn unavailable(name: &str, reason: impl Into<String>) -> Error {
    Error::WeightsUnavailable { name: name.to_string(), reason: reason.into() }
}

/// Loads and checksum-verifies the weight file for `name`.
pub fn load_verified(dir: &Path, name: &str) -> Result<HashMap<String, Tensor>> {
    let path = weights_path(dir, name);
    let bytes = std::fs::read(&path).map_err(|e| unavailable(name, format!("{}: {e}", path.display())))?;
    let sum_path = path.with_extension("safetensors.sha256");
    let expected = std::fs::read_to_string(&sum_path)
        .map_err(|e| unavailable(name, format!("checksum file {}: {e}", sum_path.display())))?;
    let expected = expected.split_whitespace().next().unwrap_or_default().to_ascii_lowercase();
    let actual = hex::encode(Sha256::digest(&bytes));
    if expected != actual {
        return Err(unavailable(name, format!("checksum mismatch for {}: expected {expected}, got {actual}", path.display())));
    }
    candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)
        .map_err(|e| unavailable(name, format!("{}: {e}", path.display())))
}
