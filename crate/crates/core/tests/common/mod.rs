#![allow(dead_code)]

pub mod contracts;
pub mod fixtures;
pub mod grad_cases;
pub mod invariants;
pub mod mask_oracle;

use rand::Rng;
use rpo::encoder::{EncoderConfig, TokenSequence, PAD};
use rpo::tensor_core::{rng, Tape, Tensor, Var};

pub fn randn(shape: &[usize], std: f64, r: &mut impl Rng) -> Tensor {
    Tensor::randn(shape, 0.0, std, r)
}

pub fn trainable(t: Tensor) -> Tensor {
    t.with_requires_grad(true)
}

/// Small encoder that keeps brute-force loops quick.
pub fn tiny_config() -> EncoderConfig {
    EncoderConfig {
        d_v: 8,
        d_t: 8,
        d_joint: 4,
        layers_v: 1,
        layers_t: 1,
        heads: 2,
        n_x: 4,
        patch_dim: 6,
        n_y: 6,
        vocab: 12,
        mlp_ratio: 2,
        ..EncoderConfig::default()
    }
}

/// Random caption: `valid_len` non-pad ids in `[1, vocab)` then padding.
pub fn random_tokens(cfg: &EncoderConfig, r: &mut impl Rng) -> TokenSequence {
    let valid_len = r.gen_range(1..=cfg.n_y);
    let mut ids: Vec<usize> = (0..valid_len).map(|_| r.gen_range(1..cfg.vocab)).collect();
    ids.resize(cfg.n_y, PAD);
    TokenSequence { ids, valid_len }
}

/// Builds a scalar from `inputs` on a fresh tape.
pub type Scalar<'a> = dyn Fn(&mut Tape, &[Var]) -> rpo::Result<Var> + 'a;

/// Relative error used by every gradient check.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Max relative error between tape gradients and central differences
/// over every entry of every input.
pub fn grad_check(inputs: &[Tensor], f: &Scalar<'_>, h: f64) -> f64 {
    let inputs: Vec<Tensor> = inputs.iter().map(|t| t.clone().with_requires_grad(true)).collect();
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = f(&mut tape, &vars).expect("forward");
    let grads = tape.backward(out).expect("backward");
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| grads.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; tape.value(v).numel()]))
        .collect();

    let eval = |xs: &[Tensor]| -> f64 {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let o = f(&mut t, &vs).expect("forward");
        t.scalar(o)
    };
    let mut worst = 0.0f64;
    for (i, x) in inputs.iter().enumerate() {
        for e in 0..x.numel() {
            let mut plus: Vec<Tensor> = inputs.clone();
            plus[i].data_mut()[e] += h;
            let mut minus: Vec<Tensor> = inputs.clone();
            minus[i].data_mut()[e] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[i][e], numeric));
        }
    }
    worst
}

/// `Σ out ⊙ probe` for a fixed random probe, turning any output into a
/// scalar with a non-trivial upstream gradient.
pub fn probe_sum(tape: &mut Tape, out: Var, seed: u64) -> rpo::Result<Var> {
    let shape = tape.shape(out).to_vec();
    let mut r = rng::stream(seed, "probe");
    let probe = tape.constant(randn(&shape, 1.0, &mut r));
    let prod = tape.mul(out, probe)?;
    Ok(tape.sum(prod))
}
