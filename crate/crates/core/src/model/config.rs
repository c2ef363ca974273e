use serde::{Deserialize, Serialize};

use crate::scanio::SparsityFactor;
use crate::{Error, Result};

/// Architecture hyperparameters of the upsampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub sigma: SparsityFactor,
    /// Channel dimension `C` of every feature map.
    pub embed_dim: usize,
    pub rstb_count: usize,
    pub stl_per_rstb: usize,
    pub window_size: usize,
    pub num_heads: usize,
    pub in_channels: usize,
    pub mlp_ratio: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            sigma: SparsityFactor::X2,
            embed_dim: 180,
            rstb_count: 6,
            stl_per_rstb: 6,
            window_size: 8,
            num_heads: 6,
            in_channels: 1,
            mlp_ratio: 2.0,
        }
    }
}

impl ModelConfig {
    pub fn for_sigma(sigma: SparsityFactor) -> Self {
        ModelConfig {
            sigma,
            ..ModelConfig::default()
        }
    }

    /// Desk-scale architecture used by the small training profile.
    pub fn small(sigma: SparsityFactor) -> Self {
        ModelConfig {
            sigma,
            embed_dim: 16,
            rstb_count: 2,
            stl_per_rstb: 2,
            window_size: 8,
            num_heads: 2,
            in_channels: 1,
            mlp_ratio: 2.0,
        }
    }

    /// Smallest configuration that still exercises every layer type.
    pub fn tiny(sigma: SparsityFactor) -> Self {
        ModelConfig {
            sigma,
            embed_dim: 8,
            rstb_count: 1,
            stl_per_rstb: 1,
            window_size: 4,
            num_heads: 2,
            in_channels: 1,
            mlp_ratio: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.embed_dim == 0 || self.num_heads == 0 || !self.embed_dim.is_multiple_of(self.num_heads) {
            return bad(format!(
                "embed_dim {} must be a positive multiple of num_heads {}",
                self.embed_dim, self.num_heads
            ));
        }
        if self.window_size < 2 {
            return bad(format!("window_size {} must be at least 2", self.window_size));
        }
        if self.rstb_count == 0 || self.stl_per_rstb == 0 {
            return bad("need at least one residual block with one layer".into());
        }
        if self.in_channels != 1 {
            return bad(format!("only single-channel input is supported, got {}", self.in_channels));
        }
        if !(self.mlp_ratio > 0.0) || self.hidden_dim() == 0 {
            return bad(format!("mlp_ratio {} gives an empty MLP", self.mlp_ratio));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    pub fn hidden_dim(&self) -> usize {
        (self.embed_dim as f64 * self.mlp_ratio).round() as usize
    }

    pub fn shift_size(&self) -> usize {
        self.window_size / 2
    }
}
