//! Convolutional feature extractors and fractional prefix freezing.
//!
//! A "layer" is a weight-bearing convolution (with its batch norm, if any),
//! counted in forward order. Freezing a fraction `f` marks the first
//! `floor(f * layer_count)` layers non-trainable; frozen batch norms always
//! use their running statistics.

mod arch;
mod layers;
pub mod weights;

use std::collections::HashMap;

use candle_core::{Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result, INPUT_SIZE};
use arch::{Arch, ArchDef};
use layers::{ConvUnit, InitKind};

pub use weights::{weights_dir, WEIGHTS_DIR_ENV};

/// Registry keys, in documentation order.
pub const REGISTRY: [&str; 4] = ["vgg16", "inception_v3", "tiny_a", "tiny_b"];

/// Default frozen share of each backbone.
pub const DEFAULT_FREEZE_FRACTION: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub name: String,
    pub input_size: [usize; 3],
    pub feature_channels: usize,
    /// Spatial size of the final feature map at the canonical input size.
    pub feature_size: [usize; 2],
    pub layer_count: usize,
    pub pretrained: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreezePolicy {
    pub fraction: f64,
    pub frozen_layer_count: usize,
    pub layer_count: usize,
}

/// How a backbone's parameters are initialised.
#[derive(Clone, Debug)]
pub enum Init {
    /// ImageNet weights from the local cache directory.
    Pretrained { dir: std::path::PathBuf },
    /// He-uniform weights drawn from a seeded stream.
    Seeded(u64),
    /// Placeholder values, for skeletons filled from a checkpoint.
    Skeleton,
}

pub struct Backbone {
    spec: BackboneSpec,
    arch: Arch,
    units: Vec<ConvUnit>,
    freeze: FreezePolicy,
}

impl std::fmt::Debug for Backbone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backbone").field("spec", &self.spec).field("freeze", &self.freeze).finish()
    }
}

fn definition(name: &str) -> Result<ArchDef> {
    match name {
        "vgg16" => Ok(arch::vgg16()),
        "inception_v3" => Ok(arch::inception_v3()),
        "tiny_a" => Ok(arch::tiny(3)),
        "tiny_b" => Ok(arch::tiny(5)),
        other => Err(Error::UnknownBackbone { name: other.to_string(), known: REGISTRY.to_vec() }),
    }
}

fn name_stream(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Whether a registry key has published pretrained weights.
pub fn has_pretrained_weights(name: &str) -> bool {
    REGISTRY.contains(&name) && !name.starts_with("tiny")
}

/// Resolves a registry key. `pretrained` loads ImageNet weights from
/// [`weights_dir`]; otherwise weights are drawn from `init_seed`.
pub fn registry_get(name: &str, pretrained: bool, init_seed: u64) -> Result<Backbone> {
    let init = if pretrained { Init::Pretrained { dir: weights_dir() } } else { Init::Seeded(init_seed) };
    Backbone::build(name, init)
}

impl Backbone {
    pub fn build(name: &str, init: Init) -> Result<Self> {
        let def = definition(name)?;
        let pretrained = matches!(init, Init::Pretrained { .. });
        if pretrained && !has_pretrained_weights(name) {
            return Err(Error::WeightsUnavailable {
                name: name.into(),
                reason: "test backbones have no pretrained weights".into(),
            });
        }
        let mut rng = seed::rng(if let Init::Seeded(s) = init { s } else { 0 }, name_stream(name));
        let kind = if matches!(init, Init::Seeded(_)) { InitKind::HeUniform } else { InitKind::Zeros };
        let units = def
            .convs
            .iter()
            .map(|c| ConvUnit::new(c.clone(), kind, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let layer_count = units.len();
        let backbone = Self {
            spec: BackboneSpec {
                name: name.to_string(),
                input_size: [INPUT_SIZE, INPUT_SIZE, 3],
                feature_channels: def.feature_channels,
                feature_size: [def.feature_size.0, def.feature_size.1],
                layer_count,
                pretrained,
            },
            arch: def.arch,
            units,
            freeze: FreezePolicy { fraction: 0.0, frozen_layer_count: 0, layer_count },
        };
        if let Init::Pretrained { dir } = &init {
            let tensors = weights::load_verified(dir, name)?;
            backbone.load_named(&tensors, "").map_err(|e| Error::WeightsUnavailable {
                name: name.into(),
                reason: e.to_string(),
            })?;
        }
        Ok(backbone)
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn freeze_policy(&self) -> FreezePolicy {
        self.freeze
    }

    /// Marks the first `floor(fraction * layer_count)` layers frozen and the
    /// rest trainable. Calling it again with the same fraction is a no-op.
    pub fn apply_freeze(&mut self, fraction: f64) -> Result<FreezePolicy> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidFraction { name: "freeze_fraction", value: fraction, reason: "must lie in [0, 1]" });
        }
        let layer_count = self.units.len();
        let raw = fraction * layer_count as f64;
        let snapped = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw };
        let frozen = (snapped.floor() as usize).min(layer_count);
        for (i, unit) in self.units.iter_mut().enumerate() {
            unit.frozen = i < frozen;
        }
        self.freeze = FreezePolicy { fraction, frozen_layer_count: frozen, layer_count };
        Ok(self.freeze)
    }

    /// Feature map in `N×C×H×W` layout for an `N×3×224×224` input.
    pub(crate) fn forward_nchw(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        arch::forward(&self.arch, &self.units, x, train)
    }

    /// Maps a `B×224×224×3` batch to its `B×H'×W'×C` feature map in
    /// inference mode.
    pub fn extract_features(&self, batch: &Tensor) -> Result<Tensor> {
        check_input(batch)?;
        let x = batch.permute((0, 3, 1, 2))?.contiguous()?;
        let y = self.forward_nchw(&x, false)?;
        Ok(y.permute((0, 2, 3, 1))?.contiguous()?)
    }

    /// Parameters of the unfrozen layers.
    pub fn trainable_vars(&self) -> Vec<Var> {
        self.units.iter().filter(|u| !u.frozen).flat_map(|u| u.trainable().into_iter().cloned()).collect()
    }

    /// Parameters of the frozen prefix (running statistics included).
    pub fn frozen_vars(&self) -> Vec<Var> {
        self.units.iter().filter(|u| u.frozen).flat_map(|u| u.named().into_iter().map(|(_, v)| v.clone())).collect()
    }

    /// Every tensor of the backbone, named as in the reference model.
    pub fn named_vars(&self) -> Vec<(String, Var)> {
        self.units.iter().flat_map(|u| u.named().into_iter().map(|(n, v)| (n, v.clone()))).collect()
    }

    /// Per-layer trainable parameter lists, in forward order.
    pub fn layer_vars(&self) -> Vec<Vec<Var>> {
        self.units.iter().map(|u| u.trainable().into_iter().cloned().collect()).collect()
    }

    /// Overwrites every tensor from `tensors[prefix + name]`.
    pub(crate) fn load_named(&self, tensors: &HashMap<String, Tensor>, prefix: &str) -> Result<()> {
        for (name, var) in self.named_vars() {
            let key = format!("{prefix}{name}");
            let t = tensors.get(&key).ok_or_else(|| Error::InvalidManifest(format!("missing tensor `{key}`")))?;
            if t.dims() != var.dims() {
                return Err(Error::Shape { expected: format!("{key}: {:?}", var.dims()), got: t.dims().to_vec() });
            }
            var.set(&layers::ensure_f32(t.clone())?)?;
        }
        Ok(())
    }
}

pub(crate) fn check_input(batch: &Tensor) -> Result<()> {
    match batch.dims() {
        [_, h, w, 3] if *h == INPUT_SIZE && *w == INPUT_SIZE => Ok(()),
        other => Err(Error::Shape { expected: format!("B×{INPUT_SIZE}×{INPUT_SIZE}×3"), got: other.to_vec() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn ramp(b: usize) -> Tensor {
        let n = b * INPUT_SIZE * INPUT_SIZE * 3;
        let data: Vec<f32> = (0..n).map(|i| (i % 251) as f32 / 251.0).collect();
        Tensor::from_vec(data, (b, INPUT_SIZE, INPUT_SIZE, 3), &Device::Cpu).unwrap()
    }

    #[test]
    fn tiny_specs() {
        let b = registry_get("tiny_a", false, 0).unwrap();
        assert_eq!(b.spec().feature_channels, 8);
        assert_eq!(b.spec().layer_count, 4);
        assert!(!b.spec().pretrained);
        let out = b.extract_features(&ramp(2)).unwrap();
        assert_eq!(out.dims(), &[2, 14, 14, 8]);
        let again = b.extract_features(&ramp(2)).unwrap();
        assert_eq!(out.flatten_all().unwrap().to_vec1::<f32>().unwrap(), again.flatten_all().unwrap().to_vec1::<f32>().unwrap());
    }

    #[test]
    fn unknown_name_lists_registry() {
        let err = registry_get("resnet50", false, 0).unwrap_err();
        let msg = err.to_string();
        assert!(REGISTRY.iter().all(|k| msg.contains(k)), "{msg}");
    }

    #[test]
    fn pretrained_never_falls_back() {
        let dir = tempfile::tempdir().unwrap();
        let err = Backbone::build("vgg16", Init::Pretrained { dir: dir.path().into() }).unwrap_err();
        assert!(matches!(err, Error::WeightsUnavailable { .. }), "{err}");
        assert!(matches!(registry_get("tiny_a", true, 0), Err(Error::WeightsUnavailable { .. })));
    }

    #[test]
    fn pretrained_cache_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let src = registry_get("tiny_a", false, 5).unwrap();
        let tensors: HashMap<String, Tensor> =
            src.named_vars().into_iter().map(|(n, v)| (n, v.as_tensor().clone())).collect();
        let path = weights::weights_path(dir.path(), "tiny_a");
        candle_core::safetensors::save(&tensors, &path).unwrap();
        let digest = hex::encode(<sha2::Sha256 as sha2::Digest>::digest(std::fs::read(&path).unwrap()));
        std::fs::write(path.with_extension("safetensors.sha256"), format!("{digest}  tiny_a.safetensors\n")).unwrap();
        let loaded = weights::load_verified(dir.path(), "tiny_a").unwrap();
        let dst = Backbone::build("tiny_a", Init::Skeleton).unwrap();
        dst.load_named(&loaded, "").unwrap();
        let a = src.extract_features(&ramp(1)).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let b = dst.extract_features(&ramp(1)).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(a, b);

        std::fs::write(path.with_extension("safetensors.sha256"), "00ff\n").unwrap();
        let err = weights::load_verified(dir.path(), "tiny_a").unwrap_err();
        assert!(err.to_string().contains("checksum mismatch"), "{err}");
    }

    #[test]
    fn freeze_counts() {
        let mut b = registry_get("vgg16", false, 0).unwrap();
        assert_eq!(b.apply_freeze(0.25).unwrap().frozen_layer_count, 3);
        let mut t = registry_get("tiny_b", false, 0).unwrap();
        assert_eq!(t.apply_freeze(0.0).unwrap().frozen_layer_count, 0);
        assert_eq!(t.trainable_vars().len(), 12);
        assert_eq!(t.apply_freeze(0.5).unwrap().frozen_layer_count, 2);
        assert_eq!(t.apply_freeze(0.5).unwrap().frozen_layer_count, 2);
        assert_eq!(t.trainable_vars().len(), 6);
        assert_eq!(t.apply_freeze(1.0).unwrap().frozen_layer_count, 4);
        assert!(t.trainable_vars().is_empty());
        assert!(t.apply_freeze(1.5).is_err());
        assert!(t.apply_freeze(-0.1).is_err());
        let mut inc = registry_get("inception_v3", false, 0).unwrap();
        assert_eq!(inc.apply_freeze(0.25).unwrap().frozen_layer_count, 23);
    }

    #[test]
    fn frozen_prefix_gets_no_gradient() {
        let mut b = registry_get("tiny_a", false, 1).unwrap();
        b.apply_freeze(0.5).unwrap();
        let x = ramp(1).permute((0, 3, 1, 2)).unwrap().contiguous().unwrap();
        let loss = b.forward_nchw(&x, true).unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        let layers = b.layer_vars();
        for v in layers[..2].iter().flatten() {
            assert!(grads.get(v.as_tensor()).is_none());
        }
        let any_unfrozen = layers[2..].iter().flatten().any(|v| {
            grads.get(v.as_tensor()).map(|g| g.abs().unwrap().sum_all().unwrap().to_scalar::<f32>().unwrap() > 0.0).unwrap_or(false)
        });
        assert!(any_unfrozen);
    }

    #[test]
    fn wrong_spatial_size_names_expected_shape() {
        let b = registry_get("tiny_a", false, 0).unwrap();
        let x = Tensor::zeros((1, 100, 100, 3), DType::F32, &Device::Cpu).unwrap();
        let err = b.extract_features(&x).unwrap_err();
        assert!(err.to_string().contains("224"), "{err}");
    }

    #[test]
    fn reference_feature_shapes() {
        let vgg = registry_get("vgg16", false, 0).unwrap();
        assert_eq!(vgg.spec().feature_channels, 512);
        assert_eq!(vgg.extract_features(&ramp(1)).unwrap().dims(), &[1, 7, 7, 512]);
        let inc = registry_get("inception_v3", false, 0).unwrap();
        assert_eq!(inc.spec().feature_channels, 2048);
        assert_eq!(inc.extract_features(&ramp(1)).unwrap().dims(), &[1, 5, 5, 2048]);
    }
}
