use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f32) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("Adam step size must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("Adam {name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("Adam epsilon must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// First/second moment accumulators for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Result<Self> {
        config.validate()?;
        Ok(AdamState {
            config,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn for_model(model: &Mlp, config: AdamConfig) -> Result<Self> {
        let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        Self::new(config, &sizes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update over every tensor.
    pub fn update(&mut self, params: Vec<&mut [f32]>, grads: &[&[f32]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::shape("Adam tensor count", self.first.len(), params.len().max(grads.len())));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[i].len() || g.len() != self.first[i].len() {
                return Err(Error::shape(
                    format!("Adam tensor {i}"),
                    self.first[i].len(),
                    if p.len() != self.first[i].len() { p.len() } else { g.len() },
                ));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - f64::from(beta1).powi(t);
        let c2 = 1.0 - f64::from(beta2).powi(t);
        let step_size = (f64::from(lr) / c1) as f32;
        let c2_sqrt = c2.sqrt() as f32;
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                p[j] -= step_size * m[j] / (v[j].sqrt() / c2_sqrt + eps);
            }
        }
        Ok(())
    }
}

pub fn adam_step(model: &mut Mlp, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let slices = grads.slices();
    state.update(model.params_mut(), &slices)
}
