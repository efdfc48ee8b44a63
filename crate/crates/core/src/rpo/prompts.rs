use serde::{Deserialize, Serialize};

use crate::encoder::BackboneWeights;
use crate::error::{Result, RpoError};
use crate::tensor_core::{rng, Tensor};

/// Standard deviation of the random-initialization ablation.
pub const RANDOM_INIT_STD: f64 = 0.02;

/// Which encoders carry prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    Dual,
    TextOnly,
}

impl std::str::FromStr for Modality {
    type Err = RpoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual" => Ok(Modality::Dual),
            "text-only" => Ok(Modality::TextOnly),
            other => Err(RpoError::config(format!(
                "unknown modality {other:?} (expected dual or text-only)"
            ))),
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Modality::Dual => "dual",
            Modality::TextOnly => "text-only",
        })
    }
}

/// The trainable prompt blocks: `K × d_v` visual (absent for text-only
/// runs) and `K × d_t` textual.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadOnlyPromptSet {
    pub visual: Option<Tensor>,
    pub textual: Tensor,
}

impl ReadOnlyPromptSet {
    pub fn new(visual: Option<Tensor>, textual: Tensor) -> Result<Self> {
        let set = ReadOnlyPromptSet {
            visual: visual.map(|v| v.with_requires_grad(true)),
            textual: textual.with_requires_grad(true),
        };
        if set.textual.shape().len() != 2 || set.k() == 0 {
            return Err(RpoError::config("prompt blocks must be K × d with K ≥ 1"));
        }
        if let Some(v) = &set.visual {
            if v.shape().len() != 2 || v.rows() != set.k() {
                return Err(RpoError::shape("prompt set", v.shape(), set.textual.shape()));
            }
        }
        Ok(set)
    }

    pub fn k(&self) -> usize {
        self.textual.shape()[0]
    }

    pub fn modality(&self) -> Modality {
        if self.visual.is_some() {
            Modality::Dual
        } else {
            Modality::TextOnly
        }
    }

    /// Drops the visual block.
    pub fn into_text_only(mut self) -> Self {
        self.visual = None;
        self
    }

    /// Every prompt tensor, in the order visual then textual.
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.visual.iter_mut().collect();
        out.push(&mut self.textual);
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.visual.iter().collect();
        out.push(&self.textual);
        out
    }

    /// Trainable scalar count: `K·(d_v + d_t)` or `K·d_t`.
    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    /// Checks widths against a backbone.
    pub fn check_against(&self, w: &BackboneWeights) -> Result<()> {
        if self.textual.cols() != w.config.d_t {
            return Err(RpoError::shape("text prompts", self.textual.shape(), &[self.k(), w.config.d_t]));
        }
        if let Some(v) = &self.visual {
            if v.cols() != w.config.d_v {
                return Err(RpoError::shape("visual prompts", v.shape(), &[self.k(), w.config.d_v]));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

/// Spread and seed of special-token initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            sigma: 0.1,
            seed: 0,
        }
    }
}

impl InitSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(RpoError::config(format!("sigma must be positive, got {sigma}")));
        }
        Ok(InitSpec { sigma, seed })
    }
}

fn around(center: &Tensor, k: usize, sigma: f64, rng: &mut rng::Rng) -> Tensor {
    let d = center.numel();
    let noise = Tensor::randn(&[k, d], 0.0, sigma, rng);
    let data = noise
        .data()
        .iter()
        .enumerate()
        .map(|(i, e)| center.data()[i % d] + e)
        .collect();
    Tensor::new(vec![k, d], data).expect("k × d")
}

/// Draws `p_i ~ N(special, σ²I)` on each side. `σ = 0` is accepted and
/// copies the special tokens exactly; negative or non-finite σ is not.
pub fn st_initialize(w: &BackboneWeights, k: usize, spec: InitSpec) -> Result<ReadOnlyPromptSet> {
    if k == 0 {
        return Err(RpoError::config("prompt count K must be at least 1"));
    }
    if !(spec.sigma >= 0.0 && spec.sigma.is_finite()) {
        return Err(RpoError::config(format!("sigma must be non-negative, got {}", spec.sigma)));
    }
    let mut rv = rng::stream(spec.seed, "st-init/visual");
    let mut rt = rng::stream(spec.seed, "st-init/text");
    let visual = around(&w.towers.visual.special, k, spec.sigma, &mut rv);
    let textual = around(&w.towers.text.special, k, spec.sigma, &mut rt);
    ReadOnlyPromptSet::new(Some(visual), textual)
}

/// Draws every prompt entry from `N(0, 0.02²)`.
pub fn random_initialize(k: usize, d_v: usize, d_t: usize, seed: u64) -> Result<ReadOnlyPromptSet> {
    if k == 0 || d_v == 0 || d_t == 0 {
        return Err(RpoError::config("prompt shapes must be positive"));
    }
    let mut rv = rng::stream(seed, "random-init/visual");
    let mut rt = rng::stream(seed, "random-init/text");
    let visual = Tensor::randn(&[k, d_v], 0.0, RANDOM_INIT_STD, &mut rv);
    let textual = Tensor::randn(&[k, d_t], 0.0, RANDOM_INIT_STD, &mut rt);
    ReadOnlyPromptSet::new(Some(visual), textual)
}
