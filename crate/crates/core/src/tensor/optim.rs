use serde::{Deserialize, Serialize};

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Per-parameter optimizer accumulators.
///
/// For Adam the first and second moments are kept per tensor; plain SGD
/// keeps none and only uses the learning rate.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64, params: &[Tensor]) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        let zeros = |on: bool| -> Vec<Vec<f32>> {
            if on {
                params.iter().map(|p| vec![0.0; p.numel()]).collect()
            } else {
                Vec::new()
            }
        };
        let adam = kind == OptimizerKind::Adam;
        Ok(OptimizerState {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: zeros(adam),
            second: zeros(adam),
        })
    }

    pub fn adam(lr: f64, params: &[Tensor]) -> Result<Self> {
        Self::new(OptimizerKind::Adam, lr, params)
    }

    pub fn for_set(kind: OptimizerKind, lr: f64, set: &ParamSet) -> Result<Self> {
        Self::new(kind, lr, set.tensors())
    }

    /// One update of every tensor in `params` from its grad slot. Tensors
    /// without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, params: &mut [Tensor]) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.kind == OptimizerKind::Adam && self.first.len() != params.len() {
            return Err(Error::dim(format!(
                "optimizer tracks {} tensors, got {}",
                self.first.len(),
                params.len()
            )));
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    let Some(g) = p.grad.take() else { continue };
                    for (w, gv) in p.data.iter_mut().zip(&g) {
                        *w = (*w as f64 - self.lr * *gv as f64) as f32;
                    }
                    p.grad = Some(g);
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
                for ((p, m), v) in params
                    .iter_mut()
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    if m.len() != p.numel() {
                        return Err(Error::dim("optimizer moment shape differs from parameter"));
                    }
                    let Some(g) = p.grad.as_ref() else { continue };
                    for i in 0..g.len() {
                        let gi = g[i] as f64;
                        let mi = b1 * m[i] as f64 + (1.0 - b1) * gi;
                        let vi = b2 * v[i] as f64 + (1.0 - b2) * gi * gi;
                        m[i] = mi as f32;
                        v[i] = vi as f32;
                        let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
                        p.data[i] = (p.data[i] as f64 - update) as f32;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn step_set(&mut self, set: &mut ParamSet) -> Result<()> {
        self.step(set.tensors_mut())
    }
}

/// Applies one Adam update to `params` using their grad slots.
pub fn adam_step(params: &mut [Tensor], state: &mut OptimizerState) -> Result<()> {
    state.step(params)
}
