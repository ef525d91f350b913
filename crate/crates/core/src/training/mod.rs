//! Mini-batch Adam training with per-epoch train/validation curves.
//!
//! Runs are deterministic for a given `(seed, data, initial weights)` when the
//! numeric backend runs single-threaded.

mod adam;
mod history;
mod loss;

use std::time::Instant;

use candle_core::Tensor;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::dataset::{batch_iterator, Batch, DatasetManifest, Split};
use crate::ensemble::{EnsembleModel, Mode};
use crate::{metrics, seed, Error, Result};

pub use adam::{Adam, AdamParams};
pub use history::TrainHistory;
pub use loss::{categorical_cross_entropy, cross_entropy_from_rows, LOG_CLAMP};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Adam,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    CategoricalCrossEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub optimizer: Optimizer,
    pub adam: AdamParams,
    pub loss: Loss,
    pub seed: u64,
    /// Restore the weights of the epoch with the best validation accuracy
    /// at the end of training instead of keeping the final ones.
    pub keep_best_val: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 16,
            max_epochs: 40,
            optimizer: Optimizer::Adam,
            adam: AdamParams::default(),
            loss: Loss::CategoricalCrossEntropy,
            seed: 0,
            keep_best_val: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning_rate {} must be finite and > 0", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn optimizer_for(&self, model: &EnsembleModel) -> Result<Adam> {
        match self.optimizer {
            Optimizer::Adam => Adam::new(model.trainable_vars(), self.learning_rate, self.adam),
        }
    }
}

/// Outcome of one optimisation step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub loss: f64,
    pub correct: usize,
}

/// One forward pass in training mode, backward pass and Adam update.
pub fn train_step(model: &EnsembleModel, batch: &Batch, optimizer: &mut Adam, rng: &mut dyn RngCore) -> Result<StepResult> {
    let probs = model.forward(&batch.images, Mode::Train(rng))?;
    let loss = categorical_cross_entropy(&probs, &batch.onehot)?;
    let value = loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
    let grads = loss.backward()?;
    optimizer.step(&grads)?;
    let predicted = metrics::argmax_rows(&probs.to_vec2::<f32>()?);
    let correct = predicted.iter().zip(&batch.labels).filter(|(p, y)| p == y).count();
    Ok(StepResult { loss: value, correct })
}

/// State passed to the per-epoch hook of [`train_with`].
pub struct EpochEnd<'a> {
    /// 1-based epoch number.
    pub epoch: usize,
    pub model: &'a EnsembleModel,
    pub history: &'a TrainHistory,
}

pub fn train(model: &mut EnsembleModel, data: &DatasetManifest, cfg: &TrainConfig) -> Result<TrainHistory> {
    train_with(model, data, cfg, |_| Ok(()))
}

/// Trains for `cfg.max_epochs` epochs, evaluating the val split (if any) in
/// inference mode after every epoch and then calling `on_epoch_end`.
pub fn train_with(
    model: &mut EnsembleModel,
    data: &DatasetManifest,
    cfg: &TrainConfig,
    mut on_epoch_end: impl FnMut(&EpochEnd<'_>) -> Result<()>,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if model.config().num_classes != data.num_classes() {
        return Err(Error::InvalidConfig(format!(
            "model has {} classes but the manifest has {}",
            model.config().num_classes,
            data.num_classes()
        )));
    }
    if data.indices(Split::Train).is_empty() {
        return Err(Error::EmptySplit(Split::Train.to_string()));
    }
    let has_val = !data.indices(Split::Val).is_empty();
    let mut optimizer = cfg.optimizer_for(model)?;
    let mut dropout = seed::rng(cfg.seed, seed::DROPOUT);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Vec<Tensor>)> = None;

    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        let shuffle = seed::derive(cfg.seed, seed::EPOCH_SHUFFLE.wrapping_add(epoch as u64));
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for (b, batch) in batch_iterator(data, Split::Train, cfg.batch_size, Some(shuffle))?.enumerate() {
            let batch = batch?;
            let step = train_step(model, &batch, &mut optimizer, &mut dropout)?;
            if !step.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: epoch + 1, batch: b + 1, value: step.loss });
            }
            loss_sum += step.loss * batch.len() as f64;
            correct += step.correct;
            seen += batch.len();
        }
        history.train_loss.push(loss_sum / seen as f64);
        history.train_accuracy.push(correct as f64 / seen as f64);

        if has_val {
            let pred = metrics::predict_labels(model, data, Split::Val, cfg.batch_size)?;
            let val_loss = cross_entropy_from_rows(&pred.probabilities, &pred.true_labels);
            let val_acc = pred.accuracy();
            history.val_loss.push(Some(val_loss));
            history.val_accuracy.push(Some(val_acc));
            if cfg.keep_best_val && best.as_ref().map_or(true, |(acc, _)| val_acc > *acc) {
                let snapshot = model.named_vars().iter().map(|(_, v)| v.as_tensor().copy()).collect::<candle_core::Result<_>>()?;
                best = Some((val_acc, snapshot));
            }
        } else {
            history.val_loss.push(None);
            history.val_accuracy.push(None);
        }
        history.wall_time_secs.push(started.elapsed().as_secs_f64());
        log::info!(
            "epoch {}/{}: loss {:.4} acc {:.4} val_acc {:?}",
            epoch + 1,
            cfg.max_epochs,
            history.train_loss[epoch],
            history.train_accuracy[epoch],
            history.val_accuracy[epoch]
        );
        on_epoch_end(&EpochEnd { epoch: epoch + 1, model, history: &history })?;
    }

    if let Some((_, snapshot)) = best {
        for ((_, var), saved) in model.named_vars().iter().zip(&snapshot) {
            var.set(saved)?;
        }
    }
    Ok(history)
}
