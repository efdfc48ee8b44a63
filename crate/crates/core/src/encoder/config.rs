use serde::{Deserialize, Serialize};

use crate::error::{Result, RpoError};

/// Shape of the dual-encoder backbone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub d_v: usize,
    pub d_t: usize,
    pub d_joint: usize,
    pub layers_v: usize,
    pub layers_t: usize,
    pub heads: usize,
    /// Patch tokens per image, not counting the special token.
    pub n_x: usize,
    /// Raw scalars per patch before the patch-embedding map.
    pub patch_dim: usize,
    /// Word-token slots per caption, not counting the special token.
    pub n_y: usize,
    pub vocab: usize,
    pub mlp_ratio: usize,
    pub ln_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_v: 32,
            d_t: 32,
            d_joint: 16,
            layers_v: 2,
            layers_t: 2,
            heads: 4,
            n_x: 16,
            patch_dim: 16,
            n_y: 12,
            vocab: 64,
            mlp_ratio: 4,
            ln_eps: 1e-5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_v", self.d_v),
            ("d_t", self.d_t),
            ("d_joint", self.d_joint),
            ("layers_v", self.layers_v),
            ("layers_t", self.layers_t),
            ("heads", self.heads),
            ("n_x", self.n_x),
            ("patch_dim", self.patch_dim),
            ("n_y", self.n_y),
            ("vocab", self.vocab),
            ("mlp_ratio", self.mlp_ratio),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(RpoError::config(format!("encoder.{name} must be positive")));
            }
        }
        if !self.d_v.is_multiple_of(self.heads) || !self.d_t.is_multiple_of(self.heads) {
            return Err(RpoError::config(format!(
                "widths ({}, {}) must be divisible by {} heads",
                self.d_v, self.d_t, self.heads
            )));
        }
        if !(self.ln_eps > 0.0) {
            return Err(RpoError::config("encoder.ln_eps must be positive"));
        }
        Ok(())
    }

    /// Sequence length of a visual input carrying `k` prompts.
    pub fn visual_len(&self, k: usize) -> usize {
        1 + self.n_x + k
    }

    pub fn text_len(&self, k: usize) -> usize {
        1 + self.n_y + k
    }
}
