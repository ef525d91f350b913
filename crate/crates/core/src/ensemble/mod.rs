//! Two-backbone ensemble: per-backbone global average pooling, feature
//! concatenation in configuration order, and a shared softmax head.

mod checkpoint;
mod head;

use candle_core::{DType, Tensor, Var};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::backbones::{self, Backbone, FreezePolicy, Init};
use crate::{seed, Error, Result};

pub use checkpoint::{load_checkpoint, load_checkpoint_with_meta, save_checkpoint, save_checkpoint_with_meta, CheckpointMeta, FORMAT_VERSION};
pub use head::{softmax, Head};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub backbone_names: Vec<String>,
    pub freeze_fraction: f64,
    pub head_width: usize,
    pub dropout_rate: f64,
    pub num_classes: usize,
    pub pretrained: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            backbone_names: vec!["vgg16".into(), "inception_v3".into()],
            freeze_fraction: backbones::DEFAULT_FREEZE_FRACTION,
            head_width: 256,
            dropout_rate: 0.5,
            num_classes: crate::NUM_CLASSES,
            pretrained: true,
        }
    }
}

impl EnsembleConfig {
    /// Offline configuration over the two test backbones.
    pub fn tiny() -> Self {
        Self { backbone_names: vec!["tiny_a".into(), "tiny_b".into()], pretrained: false, ..Self::default() }
    }

    /// Checks the ensemble invariants, which require exactly two backbones.
    pub fn validate(&self) -> Result<()> {
        if self.backbone_names.len() != 2 {
            return Err(Error::InvalidConfig(format!(
                "an ensemble needs exactly 2 backbones, got {}",
                self.backbone_names.len()
            )));
        }
        self.validate_variant()
    }

    /// Like [`validate`](Self::validate) but also admits single-backbone
    /// baselines.
    pub fn validate_variant(&self) -> Result<()> {
        if !(1..=2).contains(&self.backbone_names.len()) {
            return Err(Error::InvalidConfig(format!(
                "expected 1 or 2 backbones, got {}",
                self.backbone_names.len()
            )));
        }
        if self.head_width == 0 {
            return Err(Error::InvalidConfig("head_width must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("num_classes must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!("dropout_rate {} must lie in [0, 1)", self.dropout_rate)));
        }
        if !(0.0..=1.0).contains(&self.freeze_fraction) {
            return Err(Error::InvalidConfig(format!("freeze_fraction {} must lie in [0, 1]", self.freeze_fraction)));
        }
        Ok(())
    }
}

/// Forward-pass mode. Training applies dropout using the caller's stream.
pub enum Mode<'a> {
    Train(&'a mut dyn RngCore),
    Infer,
}

pub struct EnsembleModel {
    config: EnsembleConfig,
    init_seed: u64,
    backbones: Vec<Backbone>,
    head: Head,
}

impl std::fmt::Debug for EnsembleModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnsembleModel")
            .field("config", &self.config)
            .field("fused_dim", &self.fused_dim())
            .finish()
    }
}

/// Builds the two-backbone ensemble with the configured freeze fraction
/// applied to both backbones. `init_seed` drives every random initialisation
/// (non-pretrained backbones and the head).
pub fn build_ensemble(config: &EnsembleConfig, init_seed: u64) -> Result<EnsembleModel> {
    config.validate()?;
    EnsembleModel::build(config, init_seed, false)
}

/// `B×H×W×C` → `B×C` by averaging every channel over all spatial positions.
pub fn global_average_pool(feature_map: &Tensor) -> Result<Tensor> {
    match feature_map.dims() {
        [_, h, w, _] if *h >= 1 && *w >= 1 => Ok(feature_map.mean(1)?.mean(1)?),
        other => Err(Error::Shape { expected: "B×H×W×C with H, W >= 1".into(), got: other.to_vec() }),
    }
}

impl EnsembleModel {
    /// Builds an ensemble or a single-backbone baseline.
    pub fn build_variant(config: &EnsembleConfig, init_seed: u64) -> Result<Self> {
        config.validate_variant()?;
        Self::build(config, init_seed, false)
    }

    pub(crate) fn build(config: &EnsembleConfig, init_seed: u64, skeleton: bool) -> Result<Self> {
        let mut parts = Vec::with_capacity(config.backbone_names.len());
        for name in &config.backbone_names {
            let init = if skeleton {
                Init::Skeleton
            } else if config.pretrained {
                Init::Pretrained { dir: backbones::weights_dir() }
            } else {
                Init::Seeded(init_seed)
            };
            let mut b = Backbone::build(name, init)?;
            b.apply_freeze(config.freeze_fraction)?;
            parts.push(b);
        }
        let fused_dim = parts.iter().map(|b| b.spec().feature_channels).sum();
        let mut rng = seed::rng(init_seed, seed::HEAD_INIT);
        let head = Head::new(fused_dim, config.head_width, config.num_classes, config.dropout_rate, DType::F32, &mut rng)?;
        Ok(Self { config: config.clone(), init_seed, backbones: parts, head })
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn backbones(&self) -> &[Backbone] {
        &self.backbones
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn freeze_policies(&self) -> Vec<FreezePolicy> {
        self.backbones.iter().map(Backbone::freeze_policy).collect()
    }

    /// Sum of the backbones' feature channels.
    pub fn fused_dim(&self) -> usize {
        self.backbones.iter().map(|b| b.spec().feature_channels).sum()
    }

    fn fuse(&self, batch: &Tensor, train: bool) -> Result<Tensor> {
        backbones::check_input(batch)?;
        let x = batch.permute((0, 3, 1, 2))?.contiguous()?;
        let pooled = self
            .backbones
            .iter()
            .map(|b| Ok(b.forward_nchw(&x, train)?.mean(3)?.mean(2)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::cat(&pooled, 1)?)
    }

    /// Pooled and concatenated backbone features (`B×fused_dim`), inference
    /// mode.
    pub fn fused_features(&self, batch: &Tensor) -> Result<Tensor> {
        self.fuse(batch, false)
    }

    /// Class probabilities (`B×num_classes`) for a `B×224×224×3` batch.
    pub fn forward(&self, batch: &Tensor, mode: Mode<'_>) -> Result<Tensor> {
        match mode {
            Mode::Infer => self.head.probabilities(&self.fuse(batch, false)?, None),
            Mode::Train(rng) => self.head.probabilities(&self.fuse(batch, true)?, Some(rng)),
        }
    }

    /// Parameters the optimizer may update: unfrozen backbone layers and the
    /// whole head.
    pub fn trainable_vars(&self) -> Vec<Var> {
        let mut vars: Vec<Var> = self.backbones.iter().flat_map(Backbone::trainable_vars).collect();
        vars.extend(self.head.vars());
        vars
    }

    pub fn frozen_vars(&self) -> Vec<Var> {
        self.backbones.iter().flat_map(Backbone::frozen_vars).collect()
    }

    /// Every tensor in the model with a stable, unique name.
    pub fn named_vars(&self) -> Vec<(String, Var)> {
        let mut out = Vec::new();
        for (i, b) in self.backbones.iter().enumerate() {
            out.extend(b.named_vars().into_iter().map(|(n, v)| (format!("backbone{i}.{n}"), v)));
        }
        out.extend(self.head.named_vars().into_iter().map(|(n, v)| (format!("head.{n}"), v)));
        out
    }
}
