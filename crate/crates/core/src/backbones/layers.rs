use candle_core::{DType, Device, Tensor, Var};
use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;

use crate::Result;

/// Static description of one convolution (+ optional batch norm) + ReLU unit.
#[derive(Clone, Debug)]
pub(crate) struct ConvDef {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: (usize, usize),
    pub bias: bool,
    pub batch_norm: bool,
}

impl ConvDef {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, kernel: usize) -> Self {
        Self {
            name: name.into(),
            in_channels: cin,
            out_channels: cout,
            kernel: (kernel, kernel),
            stride: 1,
            padding: (0, 0),
            bias: true,
            batch_norm: false,
        }
    }

    pub fn kernel2(mut self, kh: usize, kw: usize) -> Self {
        self.kernel = (kh, kw);
        self
    }

    pub fn stride(mut self, s: usize) -> Self {
        self.stride = s;
        self
    }

    pub fn pad(mut self, p: usize) -> Self {
        self.padding = (p, p);
        self
    }

    pub fn pad2(mut self, ph: usize, pw: usize) -> Self {
        self.padding = (ph, pw);
        self
    }

    /// Bias-free convolution followed by batch norm (InceptionV3 style).
    pub fn with_bn(mut self) -> Self {
        self.bias = false;
        self.batch_norm = true;
        self
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel.0, self.kernel.1]
    }

    #[cfg(test)]
    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding.0 - self.kernel.0) / self.stride + 1,
            (w + 2 * self.padding.1 - self.kernel.1) / self.stride + 1,
        )
    }
}

/// Parameter initialisation for a freshly built unit.
#[derive(Clone, Copy, Debug)]
pub(crate) enum InitKind {
    /// He-uniform weights, zero bias, identity batch norm.
    HeUniform,
    /// Everything zero except running variance and BN scale; used for
    /// skeletons that are immediately overwritten.
    Zeros,
}

pub(crate) struct BatchNorm {
    pub gamma: Var,
    pub beta: Var,
    pub running_mean: Var,
    pub running_var: Var,
}

const BN_EPS: f64 = 1e-3;
const BN_MOMENTUM: f64 = 0.1;

pub(crate) struct ConvUnit {
    pub def: ConvDef,
    pub weight: Var,
    pub bias: Option<Var>,
    pub bn: Option<BatchNorm>,
    pub frozen: bool,
}

fn var_from(data: Vec<f32>, shape: &[usize]) -> Result<Var> {
    Ok(Var::from_tensor(&Tensor::from_vec(data, shape, &Device::Cpu)?)?)
}

fn filled(value: f32, n: usize) -> Result<Var> {
    var_from(vec![value; n], &[n])
}

impl ConvUnit {
    pub fn new(def: ConvDef, init: InitKind, rng: &mut ChaCha8Rng) -> Result<Self> {
        let shape = def.weight_shape();
        let numel: usize = shape.iter().product();
        let weight = match init {
            InitKind::HeUniform => {
                let fan_in = (def.in_channels * def.kernel.0 * def.kernel.1) as f32;
                let limit = (6.0 / fan_in).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit);
                var_from((0..numel).map(|_| dist.sample(rng)).collect(), &shape)?
            }
            InitKind::Zeros => var_from(vec![0.0; numel], &shape)?,
        };
        let c = def.out_channels;
        let bias = if def.bias { Some(filled(0.0, c)?) } else { None };
        let bn = if def.batch_norm {
            Some(BatchNorm {
                gamma: filled(1.0, c)?,
                beta: filled(0.0, c)?,
                running_mean: filled(0.0, c)?,
                running_var: filled(1.0, c)?,
            })
        } else {
            None
        };
        Ok(Self { def, weight, bias, bn, frozen: false })
    }

    /// Frozen parameters enter the graph detached, so backprop neither
    /// produces gradients for them nor walks past them.
    fn param(&self, v: &Var) -> Tensor {
        if self.frozen {
            v.as_tensor().detach()
        } else {
            v.as_tensor().clone()
        }
    }

    /// `x` is `N×C×H×W`. Output is `relu(bn(conv(x) + b))`.
    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (ph, pw) = self.def.padding;
        let mut x = x.clone();
        if ph > 0 {
            x = x.pad_with_zeros(2, ph, ph)?;
        }
        if pw > 0 {
            x = x.pad_with_zeros(3, pw, pw)?;
        }
        let mut y = x.conv2d(&self.param(&self.weight), 0, self.def.stride, 1, 1)?;
        if let Some(b) = &self.bias {
            y = y.broadcast_add(&self.param(b).reshape((1, (), 1, 1))?)?;
        }
        if let Some(bn) = &self.bn {
            y = self.batch_norm(bn, &y, train)?;
        }
        Ok(y.relu()?)
    }

    fn batch_norm(&self, bn: &BatchNorm, y: &Tensor, train: bool) -> Result<Tensor> {
        let shape = (1, (), 1, 1);
        let (mean, var) = if train && !self.frozen {
            let mean = y.mean_keepdim(0)?.mean_keepdim(2)?.mean_keepdim(3)?;
            let centered = y.broadcast_sub(&mean)?;
            let var = centered.sqr()?.mean_keepdim(0)?.mean_keepdim(2)?.mean_keepdim(3)?;
            self.update_running(bn, &mean, &var, y)?;
            (mean, var)
        } else {
            (bn.running_mean.as_tensor().detach().reshape(shape)?, bn.running_var.as_tensor().detach().reshape(shape)?)
        };
        let normed = y.broadcast_sub(&mean)?.broadcast_div(&(var + BN_EPS)?.sqrt()?)?;
        Ok(normed
            .broadcast_mul(&self.param(&bn.gamma).reshape(shape)?)?
            .broadcast_add(&self.param(&bn.beta).reshape(shape)?)?)
    }

    fn update_running(&self, bn: &BatchNorm, mean: &Tensor, var: &Tensor, y: &Tensor) -> Result<()> {
        let (n, _, h, w) = y.dims4()?;
        let count = (n * h * w) as f64;
        let unbiased = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        let mean = mean.detach().flatten_all()?;
        let var = (var.detach().flatten_all()? * unbiased)?;
        let rm = ((bn.running_mean.as_tensor() * (1.0 - BN_MOMENTUM))? + (mean * BN_MOMENTUM)?)?;
        let rv = ((bn.running_var.as_tensor() * (1.0 - BN_MOMENTUM))? + (var * BN_MOMENTUM)?)?;
        bn.running_mean.set(&rm)?;
        bn.running_var.set(&rv)?;
        Ok(())
    }

    /// Parameters updated by the optimizer when the unit is not frozen.
    pub fn trainable(&self) -> Vec<&Var> {
        let mut out = vec![&self.weight];
        out.extend(self.bias.as_ref());
        if let Some(bn) = &self.bn {
            out.push(&bn.gamma);
            out.push(&bn.beta);
        }
        out
    }

    /// Every tensor of the unit, keyed by its reference-model name.
    pub fn named(&self) -> Vec<(String, &Var)> {
        let n = &self.def.name;
        if let Some(bn) = &self.bn {
            vec![
                (format!("{n}.conv.weight"), &self.weight),
                (format!("{n}.bn.weight"), &bn.gamma),
                (format!("{n}.bn.bias"), &bn.beta),
                (format!("{n}.bn.running_mean"), &bn.running_mean),
                (format!("{n}.bn.running_var"), &bn.running_var),
            ]
        } else {
            let mut out = vec![(format!("{n}.weight"), &self.weight)];
            if let Some(b) = &self.bias {
                out.push((format!("{n}.bias"), b));
            }
            out
        }
    }
}

pub(crate) fn max_pool(x: &Tensor, k: usize, stride: usize) -> Result<Tensor> {
    Ok(x.max_pool2d_with_stride(k, stride)?)
}

/// 3×3 stride-1 average pool with one pixel of zero padding counted in the
/// denominator.
pub(crate) fn avg_pool_3x3_same(x: &Tensor) -> Result<Tensor> {
    let x = x.pad_with_zeros(2, 1, 1)?.pad_with_zeros(3, 1, 1)?;
    Ok(x.avg_pool2d_with_stride(3, 1)?)
}

pub(crate) fn cat_channels(parts: &[Tensor]) -> Result<Tensor> {
    Ok(Tensor::cat(parts, 1)?)
}

pub(crate) fn ensure_f32(t: Tensor) -> Result<Tensor> {
    Ok(if t.dtype() == DType::F32 { t } else { t.to_dtype(DType::F32)? })
}
