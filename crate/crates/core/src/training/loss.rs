use candle_core::Tensor;

use crate::{Error, Result};

/// Probabilities are clamped to this floor before taking the log.
pub const LOG_CLAMP: f64 = 1e-7;

/// Mean over the batch of `-log p[b, true_class(b)]`, as a scalar tensor that
/// can be differentiated.
pub fn categorical_cross_entropy(probs: &Tensor, onehot: &Tensor) -> Result<Tensor> {
    if probs.dims() != onehot.dims() || probs.rank() != 2 {
        return Err(Error::Shape { expected: format!("one-hot targets shaped like {:?}", probs.dims()), got: onehot.dims().to_vec() });
    }
    let log_p = probs.clamp(LOG_CLAMP, 1.0)?.log()?;
    Ok(log_p.mul(onehot)?.sum(1)?.mean(0)?.neg()?)
}

/// Same loss on plain rows of probabilities and integer labels.
pub fn cross_entropy_from_rows(probs: &[Vec<f32>], labels: &[usize]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let total: f64 = probs.iter().zip(labels).map(|(row, &y)| -(row[y] as f64).clamp(LOG_CLAMP, 1.0).ln()).sum();
    total / probs.len() as f64
}
