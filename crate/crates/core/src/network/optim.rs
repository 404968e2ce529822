use serde::{Deserialize, Serialize};

use super::Parameter;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

fn default_momentum() -> f64 {
    0.9
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            momentum: default_momentum(),
            weight_decay: 0.0,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            ..Self::sgd(lr)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("momentum and beta coefficients must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// SGD with momentum or Adam, holding one state buffer per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    /// Learning rate used for the next step; starts at `config.lr`.
    pub lr: f64,
    pub steps: usize,
    /// Momentum (SGD) or first moment (Adam).
    pub first: Vec<Vec<f64>>,
    /// Second moment (Adam only).
    pub second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &[Parameter]) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.numel()]).collect();
        let second = match config.kind {
            OptimizerKind::Adam => zeros.clone(),
            OptimizerKind::Sgd => Vec::new(),
        };
        Ok(Self {
            lr: config.lr,
            config,
            steps: 0,
            first: zeros,
            second,
        })
    }

    pub fn step(&mut self, params: &mut [Parameter], grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(Error::Contract(format!(
                "optimizer holds {} buffers, got {} parameters and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        self.steps += 1;
        let c = &self.config;
        let lr = self.lr;
        let t = self.steps as i32;
        let (bc1, bc2) = (1.0 - c.beta1.powi(t), 1.0 - c.beta2.powi(t));
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if g.shape() != p.value.shape() {
                return Err(Error::Dimension {
                    op: "optimizer step",
                    lhs: p.value.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            let w = p.value.data_mut();
            let m = &mut self.first[i];
            match c.kind {
                OptimizerKind::Sgd => {
                    for j in 0..w.len() {
                        let d = g.data()[j] + c.weight_decay * w[j];
                        m[j] = c.momentum * m[j] + d;
                        w[j] -= lr * m[j];
                    }
                }
                OptimizerKind::Adam => {
                    let v = &mut self.second[i];
                    for j in 0..w.len() {
                        let d = g.data()[j] + c.weight_decay * w[j];
                        m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * d;
                        v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * d * d;
                        w[j] -= lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + c.eps);
                    }
                }
            }
        }
        Ok(())
    }
}
