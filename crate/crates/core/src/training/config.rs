use serde::{Deserialize, Serialize};

use super::optim::OptimizerKind;
use crate::error::{Error, Result};

/// Supervised optimization settings. The learning rate follows a cosine
/// decay to zero over all steps of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 5e-4,
            weight_decay: 8e-3,
            optimizer: OptimizerKind::AdamW,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay {} must be non-negative",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Adversarial adaptation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Gradient-penalty weight.
    pub gp_weight: f64,
    /// Critic updates per target-encoder update.
    pub critic_steps: usize,
    /// Start the target encoder from the source encoder (first layer
    /// re-initialized when station counts differ) instead of from scratch.
    pub warm_start: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 5e-4,
            weight_decay: 8e-3,
            optimizer: OptimizerKind::RmsProp,
            seed: 0,
            gp_weight: 10.0,
            critic_steps: 5,
            warm_start: true,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            optimizer: self.optimizer,
            seed: self.seed,
        }
        .validate()?;
        if !(self.gp_weight >= 0.0 && self.gp_weight.is_finite()) {
            return Err(Error::Config(format!(
                "gp_weight {} must be non-negative",
                self.gp_weight
            )));
        }
        if self.critic_steps < 1 {
            return Err(Error::Config("critic_steps must be at least 1".into()));
        }
        Ok(())
    }
}
