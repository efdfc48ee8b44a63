//! Contrastive pre-training of the backbone on synthetic image/caption
//! pairs.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode_caption, encode_image, AttentionMode, BackboneWeights, EncoderConfig};
use crate::error::{Result, RpoError};
use crate::experiments::SyntheticWorld;
use crate::tensor_core::{rng, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    /// Image/caption pairs in the fixed training corpus.
    pub pairs: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    /// Set from the run's global seed rather than from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            pairs: 2400,
            batch_size: 16,
            steps: 250,
            lr: 2e-3,
            seed: 1,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pairs == 0 || self.batch_size == 0 || self.steps == 0 {
            return Err(RpoError::config("pretrain pairs, batch_size and steps must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(RpoError::config("pretrain lr must be positive"));
        }
        Ok(())
    }
}

/// One image/caption pair of the corpus.
#[derive(Debug, Clone)]
pub struct Pair {
    pub class_name: String,
    pub image: Tensor,
}

/// Fixed corpus drawn from the world's pre-training classes.
#[derive(Debug, Clone)]
pub struct PretrainCorpus {
    pub pairs: Vec<Pair>,
}

impl PretrainCorpus {
    /// Cycles through the pre-training classes, rendering a fresh image
    /// each time.
    pub fn generate(world: &SyntheticWorld, pairs: usize, seed: u64) -> Result<Self> {
        let pool = world.pretrain_pool();
        if pool.is_empty() {
            return Err(RpoError::config("world has no pre-training classes"));
        }
        let mut r = rng::stream(seed, "pretrain/corpus");
        let pairs = (0..pairs)
            .map(|i| {
                let name = &pool[i % pool.len()];
                let z = world.prototype(name)?;
                Ok(Pair {
                    class_name: name.clone(),
                    image: world.render_image(&z, false, &mut r),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PretrainCorpus { pairs })
    }

    /// Indices of `size` pairs with pairwise distinct class names.
    pub fn sample_batch(&self, size: usize, r: &mut rng::Rng) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        order.shuffle(r);
        let mut seen = std::collections::HashSet::new();
        order
            .into_iter()
            .filter(|&i| seen.insert(self.pairs[i].class_name.as_str()))
            .take(size)
            .collect()
    }
}

/// Adam over a list of tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Advances the step counter, sizing moment buffers on first use.
    pub fn begin_step(&mut self, sizes: &[usize]) {
        if self.m.len() != sizes.len() {
            self.m = sizes.iter().map(|&n| vec![0.0; n]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
    }

    /// Updates parameter `slot` in place.
    pub fn update(&mut self, slot: usize, param: &mut Tensor, grad: &[f64]) {
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for (((x, g), mi), vi) in param.data_mut().iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
            *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *x -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }

    /// Applies one update from `grads[i]` to `params[i]`.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f64>]) {
        let sizes: Vec<usize> = params.iter().map(|p| p.numel()).collect();
        self.begin_step(&sizes);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            self.update(i, p, g);
        }
    }
}

/// Symmetric in-batch contrastive loss over `B` image/caption pairs.
pub fn contrastive_loss_on(
    tape: &mut Tape,
    w: &crate::encoder::BoundBackbone<'_>,
    world: &SyntheticWorld,
    pairs: &[&Pair],
) -> Result<Var> {
    let mut img = Vec::with_capacity(pairs.len());
    let mut txt = Vec::with_capacity(pairs.len());
    for p in pairs {
        let e = encode_image(tape, w, &p.image, None, AttentionMode::ReadOnly)?;
        img.push(e.class_feature);
        let tokens = world.tokenizer().caption(&p.class_name, w.config.n_y)?;
        let e = encode_caption(tape, w, &tokens, None, AttentionMode::ReadOnly)?;
        txt.push(e.class_feature);
    }
    let i = tape.concat_rows(&img)?;
    let i = tape.normalize_rows(i)?;
    let t = tape.concat_rows(&txt)?;
    let t = tape.normalize_rows(t)?;
    let inv_tau = 1.0 / w.temperature;
    let it = tape.matmul_bt(i, t)?;
    let it = tape.scale(it, inv_tau);
    let ti = tape.matmul_bt(t, i)?;
    let ti = tape.scale(ti, inv_tau);
    let targets: Vec<usize> = (0..pairs.len()).collect();
    let a = tape.cross_entropy(it, &targets)?;
    let b = tape.cross_entropy(ti, &targets)?;
    let s = tape.add(a, b)?;
    Ok(tape.scale(s, 0.5))
}

/// Loss of a batch under fixed weights.
pub fn contrastive_loss(w: &BackboneWeights, world: &SyntheticWorld, pairs: &[&Pair]) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = w.bind(&mut tape);
    let loss = contrastive_loss_on(&mut tape, &bound, world, pairs)?;
    Ok(tape.scalar(loss))
}

/// One optimizer step on `pairs`; `w` must be trainable. Returns the
/// loss before the update.
pub fn pretrain_step(
    w: &mut BackboneWeights,
    adam: &mut Adam,
    world: &SyntheticWorld,
    pairs: &[&Pair],
) -> Result<f64> {
    let mut tape = Tape::new();
    let (loss_value, grads) = {
        let bound = w.bind(&mut tape);
        let loss = contrastive_loss_on(&mut tape, &bound, world, pairs)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Ok(value);
        }
        let g = tape.backward(loss)?;
        let vars: Vec<Var> = bound.towers.leaves().into_iter().map(|(_, v)| *v).collect();
        let grads = vars
            .iter()
            .zip(w.towers.leaves())
            .map(|(v, (name, t))| {
                g.get(*v)
                    .map(<[f64]>::to_vec)
                    .or_else(|| (!t.requires_grad()).then(|| vec![0.0; t.numel()]))
                    .ok_or(RpoError::MissingGradient(name))
            })
            .collect::<Result<Vec<_>>>()?;
        (value, grads)
    };
    let sizes: Vec<usize> = grads.iter().map(Vec::len).collect();
    adam.begin_step(&sizes);
    let mut slot = 0;
    w.towers.visit_mut(&mut |_, t| {
        adam.update(slot, t, &grads[slot]);
        slot += 1;
    });
    Ok(loss_value)
}

/// One record per logged pre-training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainRecord {
    pub step: usize,
    pub loss: f64,
}

/// Pre-trained weights and their loss trace.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub weights: BackboneWeights,
    pub log: Vec<PretrainRecord>,
}

/// Trains a freshly initialized backbone and returns it frozen.
pub fn contrastive_pretrain(
    cfg: &PretrainConfig,
    encoder: &EncoderConfig,
    world: &SyntheticWorld,
    corpus: &PretrainCorpus,
) -> Result<Pretrained> {
    cfg.validate()?;
    let mut w = BackboneWeights::init(encoder, rng::derive_seed(cfg.seed, "pretrain/init"))?;
    w.set_trainable(true);
    let mut adam = Adam::new(cfg.lr);
    let mut r = rng::stream(cfg.seed, "pretrain/batches");
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let idx = corpus.sample_batch(cfg.batch_size, &mut r);
        let batch: Vec<&Pair> = idx.iter().map(|&i| &corpus.pairs[i]).collect();
        let loss = pretrain_step(&mut w, &mut adam, world, &batch)?;
        if !loss.is_finite() {
            return Err(RpoError::Divergence { step, loss });
        }
        log.push(PretrainRecord { step, loss });
    }
    Ok(Pretrained {
        weights: w.frozen(),
        log,
    })
}
