use serde::{Deserialize, Serialize};

use super::StagedParams;

pub const DEFAULT_LR: f64 = 3e-4;
pub const DEFAULT_WEIGHT_DECAY: f64 = 0.05;

pub trait Optimizer {
    fn step(&mut self, params: &mut StagedParams, grads: &StagedParams);
}

/// How a reported "momentum" of 0.05 for AdamW is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentumReading {
    /// Decoupled weight decay 0.05 with the usual beta1 = 0.9.
    WeightDecay,
    /// beta1 = 0.05 with no weight decay.
    Beta1,
}

impl std::str::FromStr for MomentumReading {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weight-decay" => Ok(Self::WeightDecay),
            "beta1" => Ok(Self::Beta1),
            other => Err(format!(
                "unknown momentum reading {other:?} (expected weight-decay or beta1)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self::from_momentum(DEFAULT_LR, MomentumReading::WeightDecay, 0.05)
    }
}

impl AdamWConfig {
    pub fn from_momentum(lr: f64, reading: MomentumReading, momentum: f64) -> Self {
        let base = Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        match reading {
            MomentumReading::WeightDecay => Self {
                weight_decay: momentum,
                ..base
            },
            MomentumReading::Beta1 => Self {
                beta1: momentum,
                ..base
            },
        }
    }
}

/// Bias-corrected Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub first_moment: StagedParams,
    pub second_moment: StagedParams,
    /// Number of steps taken.
    pub step_index: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, like: &StagedParams) -> Self {
        Self {
            config,
            first_moment: like.zeros_like(),
            second_moment: like.zeros_like(),
            step_index: 0,
        }
    }
}

impl Optimizer for AdamW {
    fn step(&mut self, params: &mut StagedParams, grads: &StagedParams) {
        self.step_index += 1;
        let c = self.config;
        let t = self.step_index as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let moments = self
            .first_moment
            .blocks_mut()
            .into_iter()
            .zip(self.second_moment.blocks_mut());
        for ((p, g), (m, v)) in params
            .blocks_mut()
            .into_iter()
            .zip(grads.blocks())
            .zip(moments)
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                p.data[i] -= c.lr * c.weight_decay * p.data[i];
                m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * gi;
                v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * gi * gi;
                let m_hat = m.data[i] / bias1;
                let v_hat = v.data[i] / bias2;
                p.data[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
    }
}

/// Plain gradient descent, `theta -= lr * g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut StagedParams, grads: &StagedParams) {
        for (p, g) in params.blocks_mut().into_iter().zip(grads.blocks()) {
            for (pi, gi) in p.data.iter_mut().zip(g.data) {
                *pi -= self.lr * gi;
            }
        }
    }
}
