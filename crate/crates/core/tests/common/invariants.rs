//! Randomized read-only checks over full encoder passes.

use rand::Rng;
use rpo::encoder::{
    encode_caption, encode_image, AttentionMode, BackboneWeights, EncoderConfig, TokenSequence,
};
use rpo::tensor_core::{rng, Tape, Tensor};

use super::{randn, random_tokens};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Tower {
    Visual,
    Text,
}

pub enum Input {
    Image(Tensor),
    Caption(TokenSequence),
}

/// Original-block hidden rows and the class feature of one pass, plus
/// the prompt gradient of their probe sum when prompts are trainable.
pub struct Pass {
    pub originals: Tensor,
    pub class_feature: Tensor,
    pub prompt_grad: Option<Vec<f64>>,
}

pub fn original_rows(cfg: &EncoderConfig, tower: Tower) -> (usize, usize) {
    match tower {
        Tower::Visual => (0, 1 + cfg.n_x),
        Tower::Text => (0, 1 + cfg.n_y),
    }
}

pub fn run(
    w: &BackboneWeights,
    input: &Input,
    prompts: Option<&Tensor>,
    mode: AttentionMode,
) -> Pass {
    let mut tape = Tape::new();
    let bound = w.bind(&mut tape);
    let p = prompts.map(|p| tape.leaf(&p.clone().with_requires_grad(true)));
    let enc = match input {
        Input::Image(img) => encode_image(&mut tape, &bound, img, p, mode),
        Input::Caption(c) => encode_caption(&mut tape, &bound, c, p, mode),
    }
    .expect("forward");
    let tower = match input {
        Input::Image(_) => Tower::Visual,
        Input::Caption(_) => Tower::Text,
    };
    let (start, len) = original_rows(&w.config, tower);
    let orig = tape.slice_rows(enc.hidden, start, len).expect("slice");
    let prompt_grad = p.map(|pv| {
        let a = tape.sum(orig);
        let b = tape.sum(enc.class_feature);
        let s = tape.add(a, b).expect("add");
        let g = tape.backward(s).expect("backward");
        g.get(pv).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; tape.value(pv).numel()])
    });
    Pass {
        originals: tape.value(orig).clone(),
        class_feature: tape.value(enc.class_feature).clone(),
        prompt_grad,
    }
}

pub fn random_input(cfg: &EncoderConfig, tower: Tower, r: &mut impl Rng) -> Input {
    match tower {
        Tower::Visual => Input::Image(randn(&[cfg.n_x, cfg.patch_dim], 1.0, r)),
        Tower::Text => Input::Caption(random_tokens(cfg, r)),
    }
}

fn prompt_width(cfg: &EncoderConfig, tower: Tower) -> usize {
    match tower {
        Tower::Visual => cfg.d_v,
        Tower::Text => cfg.d_t,
    }
}

/// Counts from [`non_interference`].
#[derive(Debug, Default, Clone, Copy)]
pub struct NonInterference {
    pub trials: usize,
    /// Trials whose originals and class feature are bit-identical with and
    /// without prompts.
    pub identical: usize,
    /// Trials whose central difference on a random prompt entry is
    /// exactly zero for every original output.
    pub zero_fd: usize,
    /// Trials whose autodiff prompt gradient is exactly zero.
    pub zero_grad: usize,
}

impl NonInterference {
    pub fn all_hold(&self) -> bool {
        self.identical == self.trials && self.zero_fd == self.trials && self.zero_grad == self.trials
    }
}

/// Random (input, prompt, weight) triples under read-only attention.
pub fn non_interference(cfg: &EncoderConfig, tower: Tower, trials: usize, seed: u64) -> NonInterference {
    let mut r = rng::stream(seed, "non-interference");
    let mut out = NonInterference {
        trials,
        ..Default::default()
    };
    for _ in 0..trials {
        let w = BackboneWeights::init(cfg, r.gen()).expect("init").frozen();
        let input = random_input(cfg, tower, &mut r);
        let k = r.gen_range(1..=8);
        let prompts = randn(&[k, prompt_width(cfg, tower)], r.gen_range(0.1..3.0), &mut r);
        let bare = run(&w, &input, None, AttentionMode::ReadOnly);
        let with = run(&w, &input, Some(&prompts), AttentionMode::ReadOnly);
        if bare.originals.bit_eq(&with.originals) && bare.class_feature.bit_eq(&with.class_feature) {
            out.identical += 1;
        }
        if with.prompt_grad.as_ref().is_some_and(|g| g.iter().all(|&x| x == 0.0)) {
            out.zero_grad += 1;
        }
        let h = 1e-5;
        let e = r.gen_range(0..prompts.numel());
        let mut plus = prompts.clone();
        plus.data_mut()[e] += h;
        let mut minus = prompts.clone();
        minus.data_mut()[e] -= h;
        let a = run(&w, &input, Some(&plus), AttentionMode::ReadOnly);
        let b = run(&w, &input, Some(&minus), AttentionMode::ReadOnly);
        let fd_zero = a
            .originals
            .data()
            .iter()
            .chain(a.class_feature.data())
            .zip(b.originals.data().iter().chain(b.class_feature.data()))
            .all(|(x, y)| (x - y) / (2.0 * h) == 0.0);
        if fd_zero {
            out.zero_fd += 1;
        }
    }
    out
}

/// Number of random prompt perturbations, out of `trials`, that move some
/// original hidden state by more than `1e-8` relative when attention is
/// unmasked.
pub fn negative_control(cfg: &EncoderConfig, tower: Tower, trials: usize, seed: u64) -> usize {
    let mut r = rng::stream(seed, "negative-control");
    let mut changed = 0;
    for _ in 0..trials {
        let w = BackboneWeights::init(cfg, r.gen()).expect("init").frozen();
        let input = random_input(cfg, tower, &mut r);
        let k = r.gen_range(1..=8);
        let d = prompt_width(cfg, tower);
        let p = randn(&[k, d], 1.0, &mut r);
        let q = randn(&[k, d], 1.0, &mut r);
        let a = run(&w, &input, Some(&p), AttentionMode::Unmasked);
        let b = run(&w, &input, Some(&q), AttentionMode::Unmasked);
        let moved = a
            .originals
            .data()
            .iter()
            .zip(b.originals.data())
            .any(|(x, y)| (x - y).abs() > 1e-8 * x.abs().max(y.abs()).max(1e-300));
        if moved {
            changed += 1;
        }
    }
    changed
}
