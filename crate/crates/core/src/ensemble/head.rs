use candle_core::{DType, Device, Tensor, Var, D};
use rand::distributions::{Distribution, Uniform};
use rand::RngCore;

use crate::Result;

/// Shared classifier: dense(fused → width) + ReLU, dropout, dense(width →
/// classes) + softmax.
pub struct Head {
    pub fc1_weight: Var,
    pub fc1_bias: Var,
    pub fc2_weight: Var,
    pub fc2_bias: Var,
    dropout_rate: f64,
}

fn uniform_var(rows: usize, cols: usize, limit: f64, dtype: DType, rng: &mut dyn RngCore) -> Result<Var> {
    let dist = Uniform::new_inclusive(-limit, limit);
    let data: Vec<f64> = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    let t = Tensor::from_vec(data, (rows, cols), &Device::Cpu)?.to_dtype(dtype)?;
    Ok(Var::from_tensor(&t)?)
}

impl Head {
    /// Weights are uniform with limits scaled by fan-in: `sqrt(6 / fan_in)`
    /// for the ReLU layer, `sqrt(1 / fan_in)` for the output layer. Biases
    /// start at zero.
    pub fn new(
        fused_dim: usize,
        width: usize,
        num_classes: usize,
        dropout_rate: f64,
        dtype: DType,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        Ok(Self {
            fc1_weight: uniform_var(width, fused_dim, (6.0 / fused_dim as f64).sqrt(), dtype, rng)?,
            fc1_bias: Var::zeros(width, dtype, &Device::Cpu)?,
            fc2_weight: uniform_var(num_classes, width, (1.0 / width as f64).sqrt(), dtype, rng)?,
            fc2_bias: Var::zeros(num_classes, dtype, &Device::Cpu)?,
            dropout_rate,
        })
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    /// Pre-softmax scores for a `B×fused_dim` input. `dropout` supplies the
    /// random stream in training mode.
    pub fn logits(&self, fused: &Tensor, dropout: Option<&mut dyn RngCore>) -> Result<Tensor> {
        let h = fused
            .matmul(&self.fc1_weight.as_tensor().t()?)?
            .broadcast_add(self.fc1_bias.as_tensor())?
            .relu()?;
        let h = match dropout {
            Some(rng) if self.dropout_rate > 0.0 => {
                let mask = dropout_mask(h.dims2()?, self.dropout_rate, h.dtype(), rng)?;
                (h * mask)?
            }
            _ => h,
        };
        Ok(h.matmul(&self.fc2_weight.as_tensor().t()?)?.broadcast_add(self.fc2_bias.as_tensor())?)
    }

    pub fn probabilities(&self, fused: &Tensor, dropout: Option<&mut dyn RngCore>) -> Result<Tensor> {
        softmax(&self.logits(fused, dropout)?)
    }

    pub fn vars(&self) -> Vec<Var> {
        vec![self.fc1_weight.clone(), self.fc1_bias.clone(), self.fc2_weight.clone(), self.fc2_bias.clone()]
    }

    pub fn named_vars(&self) -> Vec<(String, Var)> {
        vec![
            ("fc1.weight".into(), self.fc1_weight.clone()),
            ("fc1.bias".into(), self.fc1_bias.clone()),
            ("fc2.weight".into(), self.fc2_weight.clone()),
            ("fc2.bias".into(), self.fc2_bias.clone()),
        ]
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
fn dropout_mask(dims: (usize, usize), rate: f64, dtype: DType, rng: &mut dyn RngCore) -> Result<Tensor> {
    let scale = 1.0 / (1.0 - rate);
    let keep = Uniform::new(0.0f64, 1.0);
    let data: Vec<f64> = (0..dims.0 * dims.1).map(|_| if keep.sample(rng) >= rate { scale } else { 0.0 }).collect();
    Ok(Tensor::from_vec(data, dims, &Device::Cpu)?.to_dtype(dtype)?)
}

/// Row-wise softmax over the last dimension, shifted by the (detached) row
/// maximum.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let max = logits.max_keepdim(D::Minus1)?.detach();
    let e = logits.broadcast_sub(&max)?.exp()?;
    let sum = e.sum_keepdim(D::Minus1)?;
    Ok(e.broadcast_div(&sum)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zeroed_output_layer_is_uniform() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let head = Head::new(16, 256, 5, 0.5, DType::F32, &mut rng).unwrap();
        head.fc2_weight.set(&Tensor::zeros((5, 256), DType::F32, &Device::Cpu).unwrap()).unwrap();
        let x = Tensor::ones((3, 16), DType::F32, &Device::Cpu).unwrap();
        let p = head.probabilities(&x, None).unwrap().to_vec2::<f32>().unwrap();
        assert!(p.iter().flatten().all(|&v| v == 0.2));
    }

    #[test]
    fn dropout_zeroes_and_rescales() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let m = dropout_mask((50, 40), 0.5, DType::F64, &mut rng).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert!(m.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = m.iter().filter(|&&v| v > 0.0).count() as f64 / m.len() as f64;
        assert!((kept - 0.5).abs() < 0.05, "{kept}");
    }

    #[test]
    fn softmax_handles_large_logits() {
        let x = Tensor::new(&[[1000f32, 1000.0, -1000.0]], &Device::Cpu).unwrap();
        let p = softmax(&x).unwrap().to_vec2::<f32>().unwrap();
        assert_eq!(p[0], vec![0.5, 0.5, 0.0]);
    }
}
