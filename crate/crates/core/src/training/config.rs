use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;
use crate::scanio::{Channel, SparsityFactor};
use crate::{Error, Result};

fn default_val_fraction() -> f64 {
    0.1
}

fn default_checkpoint_every() -> u64 {
    10
}

fn default_channel() -> Channel {
    Channel::Current
}

/// Optimisation schedule and data pipeline settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub sigma: SparsityFactor,
    pub epochs: u64,
    pub steps_per_epoch: u64,
    pub batch_size: usize,
    /// Side of the square full-resolution training crop.
    pub crop_high: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub finetune_from: Option<PathBuf>,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Network to train; the full-size configuration for `sigma` when absent.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default = "default_channel")]
    pub channel: Channel,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
}

impl TrainConfig {
    /// Full-scale schedule: 200 × 1024 steps, batch 16/16/4 and crops
    /// 256/256/384 for σ = 2/4/8, learning rate 1e-5, betas (0.9, 0.99).
    pub fn full(sigma: SparsityFactor) -> Self {
        let (batch_size, crop_high) = match sigma {
            SparsityFactor::X8 => (4, 384),
            _ => (16, 256),
        };
        TrainConfig {
            sigma,
            epochs: 200,
            steps_per_epoch: 1024,
            batch_size,
            crop_high,
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.99,
            seed: 0,
            finetune_from: None,
            val_fraction: 0.1,
            model: None,
            channel: Channel::Current,
            checkpoint_every: 10,
        }
    }

    /// Desk-scale schedule for a single CPU core: the small network,
    /// 30 × 64 steps at learning rate 1e-3, with half the full-scale batch
    /// sizes and a quarter of its crop sides.
    pub fn small(sigma: SparsityFactor) -> Self {
        let full = Self::full(sigma);
        TrainConfig {
            epochs: 30,
            steps_per_epoch: 64,
            batch_size: full.batch_size / 2,
            crop_high: full.crop_high / 4,
            learning_rate: 1e-3,
            model: Some(ModelConfig::small(sigma)),
            checkpoint_every: 5,
            ..Self::full(sigma)
        }
    }

    /// Network configuration this schedule trains.
    pub fn model_config(&self) -> ModelConfig {
        self.model.clone().unwrap_or_else(|| ModelConfig::for_sigma(self.sigma))
    }

    pub fn total_steps(&self) -> u64 {
        self.epochs * self.steps_per_epoch
    }

    /// Counts must be positive except `epochs`, which may be zero for a
    /// no-op run.
    pub fn validate(&self) -> Result<()> {
        let s = self.sigma.get();
        let problems = [
            (self.steps_per_epoch == 0, "steps_per_epoch must be positive".to_string()),
            (self.batch_size == 0, "batch_size must be positive".to_string()),
            (self.checkpoint_every == 0, "checkpoint_every must be positive".to_string()),
            (
                self.crop_high == 0 || !self.crop_high.is_multiple_of(s),
                format!("crop_high {} must be a positive multiple of sigma {s}", self.crop_high),
            ),
            (
                !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()),
                format!("learning_rate {} must be finite and non-negative", self.learning_rate),
            ),
            (!(self.beta1 > 0.0 && self.beta1 < 1.0), format!("beta1 {} outside (0, 1)", self.beta1)),
            (!(self.beta2 > 0.0 && self.beta2 < 1.0), format!("beta2 {} outside (0, 1)", self.beta2)),
            (
                !(self.val_fraction >= 0.0 && self.val_fraction < 1.0),
                format!("val_fraction {} outside [0, 1)", self.val_fraction),
            ),
        ];
        if let Some((_, msg)) = problems.into_iter().find(|(bad, _)| *bad) {
            return Err(Error::Config(msg));
        }
        let model = self.model_config();
        model.validate()?;
        if model.sigma != self.sigma {
            return Err(Error::Config(format!("model sigma {} differs from training sigma {}", model.sigma, self.sigma)));
        }
        Ok(())
    }
}
