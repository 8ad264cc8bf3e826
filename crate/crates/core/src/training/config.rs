use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean absolute measurement residual.
    #[default]
    L1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub decay_interval: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub loss: Loss,
    /// A log row (per subject) every `log_interval` iterations.
    pub log_interval: usize,
    /// Abort when any subject's loss exceeds this.
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 4000,
            learning_rate: 1e-3,
            lr_decay: 0.5,
            decay_interval: 1000,
            adam: AdamConfig::default(),
            seed: 0,
            loss: Loss::L1,
            log_interval: 10,
            divergence_threshold: 1e6,
        }
    }
}

impl TrainConfig {
    /// Step size for the update taking the model from `t` to `t + 1` updates.
    pub fn lr_at(&self, t: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((t / self.decay_interval) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.log_interval == 0 || self.decay_interval == 0 {
            return Err(Error::Config("log and decay intervals must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.lr_decay > 0.0) {
            return Err(Error::Config("learning rate and decay must be positive".into()));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::Config("Adam needs β₁, β₂ in [0, 1) and ε > 0".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::Config("divergence threshold must be positive".into()));
        }
        Ok(())
    }
}
