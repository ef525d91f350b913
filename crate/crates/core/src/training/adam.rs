use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-7 }
    }
}

struct Slot {
    var: Var,
    m: Tensor,
    v: Tensor,
}

/// Adam with bias-corrected moments:
/// `θ ← θ − lr · m̂ / (sqrt(v̂) + ε)`.
pub struct Adam {
    lr: f64,
    params: AdamParams,
    steps: u64,
    slots: Vec<Slot>,
}

impl Adam {
    pub fn new(vars: Vec<Var>, lr: f64, params: AdamParams) -> Result<Self> {
        let slots = vars
            .into_iter()
            .map(|var| {
                let m = var.as_tensor().zeros_like()?;
                let v = var.as_tensor().zeros_like()?;
                Ok(Slot { var, m, v })
            })
            .collect::<Result<_>>()?;
        Ok(Self { lr, params, steps: 0, slots })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// Applies one update to every tracked variable that has a gradient.
    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.steps += 1;
        let AdamParams { beta1, beta2, epsilon } = self.params;
        let t = self.steps as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        for slot in &mut self.slots {
            let Some(g) = grads.get(slot.var.as_tensor()) else { continue };
            // Gradients keep the forward graph alive; the moments must not.
            let g = g.detach();
            slot.m = (slot.m.affine(beta1, 0.0)? + g.affine(1.0 - beta1, 0.0)?)?.detach();
            slot.v = (slot.v.affine(beta2, 0.0)? + g.sqr()?.affine(1.0 - beta2, 0.0)?)?.detach();
            let m_hat = slot.m.affine(1.0 / correction1, 0.0)?;
            let v_hat = slot.v.affine(1.0 / correction2, 0.0)?;
            let update = m_hat.div(&(v_hat.sqrt()? + epsilon)?)?.affine(self.lr, 0.0)?;
            slot.var.set(&slot.var.as_tensor().sub(&update)?)?;
        }
        Ok(())
    }
}
