use sha2::{Digest, Sha256};

use crate::attention::MhsaWeights;
use crate::error::{Result, RpoError};
use crate::tensor_core::rng::{self, Rng};
use crate::tensor_core::{Tape, Tensor, Var};

use super::EncoderConfig;

/// Default contrastive temperature.
pub const DEFAULT_TEMPERATURE: f64 = 0.07;
/// Initial scale of token, special-token and patch embeddings.
const EMBED_STD: f64 = 0.1;
const POS_STD: f64 = 0.05;

/// Pre-norm transformer block.
#[derive(Debug, Clone)]
pub struct Block<T> {
    pub ln1_g: T,
    pub ln1_b: T,
    pub attn: MhsaWeights<T>,
    pub ln2_g: T,
    pub ln2_b: T,
    pub fc1_w: T,
    pub fc1_b: T,
    pub fc2_w: T,
    pub fc2_b: T,
}

impl<T> Block<T> {
    fn map<'s, U>(&'s self, prefix: &str, f: &mut dyn FnMut(String, &'s T) -> U) -> Block<U> {
        Block {
            ln1_g: f(format!("{prefix}.ln1_g"), &self.ln1_g),
            ln1_b: f(format!("{prefix}.ln1_b"), &self.ln1_b),
            attn: self.attn.map(&format!("{prefix}.attn"), f),
            ln2_g: f(format!("{prefix}.ln2_g"), &self.ln2_g),
            ln2_b: f(format!("{prefix}.ln2_b"), &self.ln2_b),
            fc1_w: f(format!("{prefix}.fc1_w"), &self.fc1_w),
            fc1_b: f(format!("{prefix}.fc1_b"), &self.fc1_b),
            fc2_w: f(format!("{prefix}.fc2_w"), &self.fc2_w),
            fc2_b: f(format!("{prefix}.fc2_b"), &self.fc2_b),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        f(format!("{prefix}.ln1_g"), &mut self.ln1_g);
        f(format!("{prefix}.ln1_b"), &mut self.ln1_b);
        self.attn.visit_mut(&format!("{prefix}.attn"), f);
        f(format!("{prefix}.ln2_g"), &mut self.ln2_g);
        f(format!("{prefix}.ln2_b"), &mut self.ln2_b);
        f(format!("{prefix}.fc1_w"), &mut self.fc1_w);
        f(format!("{prefix}.fc1_b"), &mut self.fc1_b);
        f(format!("{prefix}.fc2_w"), &mut self.fc2_w);
        f(format!("{prefix}.fc2_b"), &mut self.fc2_b);
    }
}

#[derive(Debug, Clone)]
pub struct VisualTower<T> {
    /// `patch_dim × d_v` patch-embedding map and its bias.
    pub patch_w: T,
    pub patch_b: T,
    /// `n_x × d_v` positional embeddings of the patch tokens.
    pub pos: T,
    /// `1 × d_v` special (class) token embedding.
    pub special: T,
    pub blocks: Vec<Block<T>>,
    pub ln_post_g: T,
    pub ln_post_b: T,
    /// `d_v × d_joint` projection into the joint space.
    pub proj: T,
}

#[derive(Debug, Clone)]
pub struct TextTower<T> {
    /// `vocab × d_t` token embedding table.
    pub token_embed: T,
    /// `n_y × d_t` positional embeddings of the word slots.
    pub pos: T,
    /// `1 × d_t` special (end-of-text) token embedding.
    pub special: T,
    pub blocks: Vec<Block<T>>,
    pub ln_post_g: T,
    pub ln_post_b: T,
    pub proj: T,
}

/// Both towers, generic over storage: `Tensor` for owned weights, `Var`
/// for weights bound onto a tape.
#[derive(Debug, Clone)]
pub struct Towers<T> {
    pub visual: VisualTower<T>,
    pub text: TextTower<T>,
}

impl<T> Towers<T> {
    pub fn map<'s, U>(&'s self, f: &mut dyn FnMut(String, &'s T) -> U) -> Towers<U> {
        let v = &self.visual;
        let visual = VisualTower {
            patch_w: f("visual.patch_w".into(), &v.patch_w),
            patch_b: f("visual.patch_b".into(), &v.patch_b),
            pos: f("visual.pos".into(), &v.pos),
            special: f("visual.special".into(), &v.special),
            blocks: v
                .blocks
                .iter()
                .enumerate()
                .map(|(i, b)| b.map(&format!("visual.blocks.{i}"), f))
                .collect(),
            ln_post_g: f("visual.ln_post_g".into(), &v.ln_post_g),
            ln_post_b: f("visual.ln_post_b".into(), &v.ln_post_b),
            proj: f("visual.proj".into(), &v.proj),
        };
        let t = &self.text;
        let text = TextTower {
            token_embed: f("text.token_embed".into(), &t.token_embed),
            pos: f("text.pos".into(), &t.pos),
            special: f("text.special".into(), &t.special),
            blocks: t
                .blocks
                .iter()
                .enumerate()
                .map(|(i, b)| b.map(&format!("text.blocks.{i}"), f))
                .collect(),
            ln_post_g: f("text.ln_post_g".into(), &t.ln_post_g),
            ln_post_b: f("text.ln_post_b".into(), &t.ln_post_b),
            proj: f("text.proj".into(), &t.proj),
        };
        Towers { visual, text }
    }

    /// Visits every leaf in the same canonical order as [`Towers::map`].
    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut T)) {
        let v = &mut self.visual;
        f("visual.patch_w".into(), &mut v.patch_w);
        f("visual.patch_b".into(), &mut v.patch_b);
        f("visual.pos".into(), &mut v.pos);
        f("visual.special".into(), &mut v.special);
        for (i, b) in v.blocks.iter_mut().enumerate() {
            b.visit_mut(&format!("visual.blocks.{i}"), f);
        }
        f("visual.ln_post_g".into(), &mut v.ln_post_g);
        f("visual.ln_post_b".into(), &mut v.ln_post_b);
        f("visual.proj".into(), &mut v.proj);
        let t = &mut self.text;
        f("text.token_embed".into(), &mut t.token_embed);
        f("text.pos".into(), &mut t.pos);
        f("text.special".into(), &mut t.special);
        for (i, b) in t.blocks.iter_mut().enumerate() {
            b.visit_mut(&format!("text.blocks.{i}"), f);
        }
        f("text.ln_post_g".into(), &mut t.ln_post_g);
        f("text.ln_post_b".into(), &mut t.ln_post_b);
        f("text.proj".into(), &mut t.proj);
    }

    /// Leaves in canonical order.
    pub fn leaves(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        let _ = self.map(&mut |name, t| out.push((name, t)));
        out
    }
}

/// Frozen dual-encoder weights plus the contrastive temperature.
#[derive(Debug, Clone)]
pub struct BackboneWeights {
    pub config: EncoderConfig,
    pub temperature: f64,
    pub towers: Towers<Tensor>,
}

/// Backbone weights registered on a tape.
pub struct BoundBackbone<'a> {
    pub config: &'a EncoderConfig,
    pub temperature: f64,
    pub towers: Towers<Var>,
}

fn block_init(d: usize, hidden: usize, heads: usize, rng: &mut Rng) -> Block<Tensor> {
    let lin = |rows: usize, cols: usize, rng: &mut Rng| {
        Tensor::randn(&[rows, cols], 0.0, 1.0 / (rows as f64).sqrt(), rng)
    };
    Block {
        ln1_g: Tensor::filled(&[d], 1.0),
        ln1_b: Tensor::zeros(&[d]),
        attn: MhsaWeights {
            heads,
            w_q: lin(d, d, rng),
            b_q: Tensor::zeros(&[d]),
            w_k: lin(d, d, rng),
            b_k: Tensor::zeros(&[d]),
            w_v: lin(d, d, rng),
            b_v: Tensor::zeros(&[d]),
            w_o: lin(d, d, rng),
            b_o: Tensor::zeros(&[d]),
        },
        ln2_g: Tensor::filled(&[d], 1.0),
        ln2_b: Tensor::zeros(&[d]),
        fc1_w: lin(d, hidden, rng),
        fc1_b: Tensor::zeros(&[hidden]),
        fc2_w: lin(hidden, d, rng),
        fc2_b: Tensor::zeros(&[d]),
    }
}

impl BackboneWeights {
    /// Randomly initialized (untrained) backbone.
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = config;
        let mut rng = rng::stream(seed, "backbone-init");
        let visual = VisualTower {
            patch_w: Tensor::randn(
                &[c.patch_dim, c.d_v],
                0.0,
                EMBED_STD / (c.patch_dim as f64).sqrt(),
                &mut rng,
            ),
            patch_b: Tensor::zeros(&[c.d_v]),
            pos: Tensor::randn(&[c.n_x, c.d_v], 0.0, POS_STD, &mut rng),
            special: Tensor::randn(&[1, c.d_v], 0.0, EMBED_STD, &mut rng),
            blocks: (0..c.layers_v)
                .map(|_| block_init(c.d_v, c.d_v * c.mlp_ratio, c.heads, &mut rng))
                .collect(),
            ln_post_g: Tensor::filled(&[c.d_v], 1.0),
            ln_post_b: Tensor::zeros(&[c.d_v]),
            proj: Tensor::randn(&[c.d_v, c.d_joint], 0.0, 1.0 / (c.d_v as f64).sqrt(), &mut rng),
        };
        let text = TextTower {
            token_embed: Tensor::randn(&[c.vocab, c.d_t], 0.0, EMBED_STD, &mut rng),
            pos: Tensor::randn(&[c.n_y, c.d_t], 0.0, POS_STD, &mut rng),
            special: Tensor::randn(&[1, c.d_t], 0.0, EMBED_STD, &mut rng),
            blocks: (0..c.layers_t)
                .map(|_| block_init(c.d_t, c.d_t * c.mlp_ratio, c.heads, &mut rng))
                .collect(),
            ln_post_g: Tensor::filled(&[c.d_t], 1.0),
            ln_post_b: Tensor::zeros(&[c.d_t]),
            proj: Tensor::randn(&[c.d_t, c.d_joint], 0.0, 1.0 / (c.d_t as f64).sqrt(), &mut rng),
        };
        Ok(BackboneWeights {
            config: config.clone(),
            temperature: DEFAULT_TEMPERATURE,
            towers: Towers { visual, text },
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(RpoError::config("temperature must be positive"));
        }
        let expected = Self::init_shapes(&self.config);
        let actual: Vec<(String, Vec<usize>)> = self
            .towers
            .leaves()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if expected != actual {
            return Err(RpoError::config("backbone tensors do not match the encoder config"));
        }
        Ok(())
    }

    /// Canonical `(name, shape)` list for `config`.
    pub fn init_shapes(config: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
        let zeros = Self::zero_towers(config);
        zeros
            .leaves()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect()
    }

    fn zero_towers(config: &EncoderConfig) -> Towers<Tensor> {
        let mut z = BackboneWeights::init(config, 0).expect("validated config").towers;
        z.visit_mut(&mut |_, t| *t = Tensor::zeros(t.shape()));
        z
    }

    /// Rebuilds weights from canonical-order tensors.
    pub fn from_tensors(
        config: EncoderConfig,
        temperature: f64,
        tensors: Vec<(String, Tensor)>,
    ) -> Result<Self> {
        config.validate()?;
        let mut towers = Self::zero_towers(&config);
        let mut iter = tensors.into_iter();
        let mut failure = None;
        towers.visit_mut(&mut |name, slot| {
            if failure.is_some() {
                return;
            }
            match iter.next() {
                Some((n, t)) if n == name && t.shape() == slot.shape() => *slot = t,
                Some((n, t)) => {
                    failure = Some(format!(
                        "tensor {n} {:?} where {name} {:?} was expected",
                        t.shape(),
                        slot.shape()
                    ))
                }
                None => failure = Some(format!("missing tensor {name}")),
            }
        });
        if let Some(msg) = failure {
            return Err(RpoError::Checkpoint(msg));
        }
        if iter.next().is_some() {
            return Err(RpoError::Checkpoint("unexpected extra tensors".into()));
        }
        let w = BackboneWeights {
            config,
            temperature,
            towers,
        };
        w.validate()?;
        Ok(w.frozen())
    }

    /// Marks every tensor as not requiring gradients.
    pub fn frozen(mut self) -> Self {
        self.set_trainable(false);
        self
    }

    pub fn set_trainable(&mut self, flag: bool) {
        self.towers.visit_mut(&mut |_, t| t.set_requires_grad(flag));
    }

    pub fn is_frozen(&self) -> bool {
        self.towers.leaves().iter().all(|(_, t)| !t.requires_grad())
    }

    pub fn parameter_count(&self) -> usize {
        self.towers.leaves().iter().map(|(_, t)| t.numel()).sum()
    }

    /// SHA-256 over the config, temperature and every tensor in canonical
    /// order, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.config).expect("config serializes"));
        h.update(self.temperature.to_le_bytes());
        for (name, t) in self.towers.leaves() {
            h.update(name.as_bytes());
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for x in t.data() {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Registers every tensor as a tape leaf.
    pub fn bind<'a>(&'a self, tape: &mut Tape) -> BoundBackbone<'a> {
        BoundBackbone {
            config: &self.config,
            temperature: self.temperature,
            towers: self.towers.map(&mut |_, t| tape.leaf(t)),
        }
    }
}
