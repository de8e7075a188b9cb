use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam hyperparameters. Defaults follow the training setup used
/// throughout this crate: lr 5e-4, betas (0.9, 0.999), eps 1e-8.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers plus the step counter for one group
/// of parameters updated together.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamStateBase<S> {
    config: AdamConfig,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    step: u64,
}

impl<S: Scalar> AdamStateBase<S> {
    /// State for a parameter group; `sizes[i]` is the element count of
    /// the i-th parameter tensor.
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        AdamStateBase {
            config,
            m: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over the whole group. `params[i]` and `grads[i]`
    /// must match the sizes the state was built with.
    pub fn step(&mut self, params: &mut [&mut [S]], grads: &[&[S]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::contract(format!(
                "optimizer built for {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.len() != self.m[i].len() || grads[i].len() != self.m[i].len() {
                return Err(Error::contract(format!(
                    "optimizer state tensor {i} has {} elements, got param {} / grad {}",
                    self.m[i].len(),
                    p.len(),
                    grads[i].len()
                )));
            }
        }
        self.step += 1;
        let b1 = S::from_f64(self.config.beta1);
        let b2 = S::from_f64(self.config.beta2);
        let lr = S::from_f64(self.config.lr);
        let eps = S::from_f64(self.config.eps);
        let one = S::one();
        let bc1 = one - S::from_f64(self.config.beta1.powi(self.step as i32));
        let bc2 = one - S::from_f64(self.config.beta2.powi(self.step as i32));
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Scales the gradient group in place so its global L2 norm does not
/// exceed `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm<S: Scalar>(grads: &mut [&mut [S]], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.iter() {
        for &v in g.iter() {
            let v = v.to_f64();
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = S::from_f64(max_norm / norm);
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}
