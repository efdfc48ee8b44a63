//! Finite-difference gradient cases shared by the gradient tests and
//! the acceptance runner. Each case returns the worst relative error over
//! its random shapes.

use rand::Rng;
use rpo::attention::{AttentionMask, MhsaWeights};
use rpo::encoder::{encode_caption, encode_image, AttentionMode, BackboneWeights, BoundBackbone};
use rpo::rpo::{pairwise_logits, text_rpo_logits};
use rpo::tensor_core::{rng, Tensor, Var};

use super::{grad_check, probe_sum, randn, random_tokens, tiny_config, Scalar};

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const SHAPES: usize = 5;

/// Folds one input set's error into the running maximum.
fn check(worst: &mut f64, inputs: &[Tensor], f: &Scalar<'_>) {
    *worst = worst.max(grad_check(inputs, f, H));
}

fn dims(r: &mut impl Rng) -> (usize, usize, usize) {
    (r.gen_range(1..6), r.gen_range(1..6), r.gen_range(1..6))
}

pub fn matmul() -> f64 {
    let mut worst = 0.0;
    let mut r = rng::stream(1, "grad/matmul");
    for s in 0..SHAPES as u64 {
        let (m, k, n) = dims(&mut r);
        let a = randn(&[m, k], 1.0, &mut r);
        let b = randn(&[k, n], 1.0, &mut r);
        check(&mut worst, &[a, b], &|t, v| {
            let o = t.matmul(v[0], v[1])?;
            probe_sum(t, o, s)
        });
    }
    worst
}

pub fn matmul_bt() -> f64 {
    let mut worst = 0.0;
    let mut r = rng::stream(1, "grad/matmul_bt");
    for s in 0..SHAPES as u64 {
        let (m, k, n) = dims(&mut r);
        let a = randn(&[m, k], 1.0, &mut r);
        let b = randn(&[n, k], 1.0, &mut r);
        check(&mut worst, &[a, b], &|t, v| {
            let o = t.matmul_bt(v[0], v[1])?;
            probe_sum(t, o, s)
        });
    }
    worst
}

pub fn add_mul_scale() -> f64 {
    let mut worst = 0.0;
    let mut r = rng::stream(1, "grad/elementwise");
    for s in 0..SHAPES as u64 {
        let (m, n, _) = dims(&mut r);
        let a = randn(&[m, n], 1.0, &mut r);
        let b = randn(&[m, n], 1.0, &mut r);
        check(&mut worst, &[a.clone(), b.clone()], &|t, v| {
            let o = t.add(v[0], v[1])?;
            probe_sum(t, o, s)
        });
        check(&mut worst, &[a.clone(), b], &|t, v| {
            let o = t.mul(v[0], v[1])?;
            probe_sum(t, o, s)
        });
        check(&mut worst, &[a], &|t, v| {
            let o = t.scale(v[0], -1.7);
            probe_sum(t, o, s)
        });
    }
    worst
}

pub fn add_row() -> f64 {
    let mut worst = 0.0;
    let mut r = rng::stream(1, "grad/add_row");
    for s in 0..SHAPES as u64 {
        let (m, n, _) = dims(&mut r);
        let a = randn(&[m, n], 1.0, &mut r);
        let b = randn(&[n], 1.0, &mut r);
        check(&mut worst, &[a, b], &|t, v| {
            let o = t.add_row(v[0], v[1])?;
            probe_sum(t, o, s)
        });
    }
    worst
}

pub fn masked_softmax() -> f64 {
    let mut worst = 0.0;
    let mut r = rng::stream(1, "grad/masked_softmax");
    for s in 0..SHAPES as u64 {
        let (m, n, _) = dims(&mut r);
        let n = n + 1;
        // Random mask with one guaranteed open column per row.
        let mut entries = vec![0.0; m * n];
        for i in 0..m {
            let keep = r.gen_range(0..n);
            for j in 0..n {
                if j != keep && r.gen_bool(0.4) {
                    entries[i * n + j] = f64::NEG_INFINITY;
                }
            }
        }
        let mask = AttentionMask::from_entries(m, n, entries).unwrap();
        let a = randn(&[m, n], 1.5, &mut r);
        check(&mut worst, &[a], &|t, v| {
            let o = t.masked_softmax(v[0], &mask)?;
            probe_sum(t, o, s)
        });
    }
    worst
}

pub fn layer_norm() -> f64 {
    let mut worst = 0.0;
    let mut r = rng::stream(1, "grad/layer_norm");
    for s in 0..SHAPES as u64 {
        let (m, n, _) = dims(&mut r);
        let n = n + 1;
        let x = randn(&[m, n], 1.0, &mut r);
        let g = randn(&[n], 1.0, &mut r);
        let b = randn(&[n], 1.0, &mut r);
        check(&mut worst, &[x, g, b], &|t, v| {
            let o = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
            probe_sum(t, o, s)
        });
    }
    worst
}

pub fn quick_gelu() -> f64 {
    let mut worst = 0.0;
    let mut r = rng::stream(1, "grad/quick_gelu");
    for s in 0..SHAPES as u64 {
        let (m, n, _) = dims(&mut r);
        let a = randn(&[m, n], 2.0, &mut r);
        check(&mut worst, &[a], &|t, v| {
            let o = t.quick_gelu(v[0]);
            probe_sum(t, o, s)
        });
    }
    worst
}

pub fn slices_and_concats() -> f64 {
    let mut worst = 0.0;
    let mut r = rng::stream(1, "grad/slices");
    for s in 0..SHAPES as u64 {
        let (m, n, _) = dims(&mut r);
        let (m, n) = (m + 1, n + 1);
        let a = randn(&[m, n], 1.0, &mut r);
        let b = randn(&[m, n], 1.0, &mut r);
        let rs = r.gen_range(0..m);
        let rl = r.gen_range(1..=m - rs);
        let cs = r.gen_range(0..n);
        let cl = r.gen_range(1..=n - cs);
        check(&mut worst, std::slice::from_ref(&a), &|t, v| {
            let o = t.slice_rows(v[0], rs, rl)?;
            probe_sum(t, o, s)
        });
        check(&mut worst, std::slice::from_ref(&a), &|t, v| {
            let o = t.slice_cols(v[0], cs, cl)?;
            probe_sum(t, o, s)
        });
        check(&mut worst, &[a.clone(), b.clone()], &|t, v| {
            let o = t.concat_rows(&[v[0], v[1], v[0]])?;
            probe_sum(t, o, s)
        });
        check(&mut worst, &[a, b], &|t, v| {
            let o = t.concat_cols(&[v[1], v[0]])?;
            probe_sum(t, o, s)
        });
    }
    worst
}

pub fn gather_rows_with_repeats() -> f64 {
    let mut worst = 0.0;
    let mut r = rng::stream(1, "grad/gather");
    for s in 0..SHAPES as u64 {
        let (m, n, l) = dims(&mut r);
        let table = randn(&[m, n], 1.0, &mut r);
        let ids: Vec<usize> = (0..l + 2).map(|_| r.gen_range(0..m)).collect();
        check(&mut worst, &[table], &|t, v| {
            let o = t.gather_rows(v[0], &ids)?;
            probe_sum(t, o, s)
        });
    }
    worst
}

pub fn reshape_sum_mean() -> f64 {
    let mut worst = 0.0;
    let mut r = rng::stream(1, "grad/reshape");
    for s in 0..SHAPES as u64 {
        let (m, n, _) = dims(&mut r);
        let a = randn(&[m, n], 1.0, &mut r);
        check(&mut worst, std::slice::from_ref(&a), &|t, v| {
            let o = t.reshape(v[0], vec![1, m * n])?;
            probe_sum(t, o, s)
        });
        check(&mut worst, std::slice::from_ref(&a), &|t, v| {
            let sq = t.mul(v[0], v[0])?;
            Ok(t.sum(sq))
        });
        check(&mut worst, &[a], &|t, v| {
            let sq = t.mul(v[0], v[0])?;
            Ok(t.mean(sq))
        });
    }
    worst
}

pub fn normalize_rows() -> f64 {
    let mut worst = 0.0;
    let mut r = rng::stream(1, "grad/normalize");
    for s in 0..SHAPES as u64 {
        let (m, n, _) = dims(&mut r);
        let a = randn(&[m, n + 1], 1.0, &mut r);
        check(&mut worst, &[a], &|t, v| {
            let o = t.normalize_rows(v[0])?;
            probe_sum(t, o, s)
        });
    }
    worst
}

pub fn cross_entropy() -> f64 {
    let mut worst = 0.0;
    let mut r = rng::stream(1, "grad/cross_entropy");
    for _ in 0..SHAPES {
        let (b, c, _) = dims(&mut r);
        let c = c + 1;
        let logits = randn(&[b, c], 2.0, &mut r);
        let targets: Vec<usize> = (0..b).map(|_| r.gen_range(0..c)).collect();
        check(&mut worst, &[logits], &|t, v| t.cross_entropy(v[0], &targets));
    }
    worst
}

fn random_mhsa(d: usize, r: &mut impl Rng) -> Vec<Tensor> {
    let s = 1.0 / (d as f64).sqrt();
    let mut out = Vec::new();
    for _ in 0..4 {
        out.push(randn(&[d, d], s, r));
        out.push(randn(&[d], 0.1, r));
    }
    out
}

fn mhsa_from(v: &[Var], heads: usize) -> MhsaWeights<Var> {
    MhsaWeights {
        heads,
        w_q: v[0],
        b_q: v[1],
        w_k: v[2],
        b_k: v[3],
        w_v: v[4],
        b_v: v[5],
        w_o: v[6],
        b_o: v[7],
    }
}

pub fn masked_mhsa_all_inputs() -> f64 {
    let mut worst = 0.0;
    let mut r = rng::stream(1, "grad/mhsa");
    for s in 0..SHAPES as u64 {
        let heads = r.gen_range(1..3);
        let d = heads * r.gen_range(1..4);
        let n_orig = r.gen_range(1..4);
        let k = r.gen_range(1..3);
        let mask = if s % 2 == 0 {
            rpo::attention::build_visual_mask(n_orig, k).unwrap()
        } else {
            rpo::attention::build_text_mask(n_orig, k).unwrap()
        };
        let n = mask.rows();
        let mut inputs = vec![randn(&[n, d], 1.0, &mut r)];
        inputs.extend(random_mhsa(d, &mut r));
        check(&mut worst, &inputs, &|t, v| {
            let w = mhsa_from(&v[1..], heads);
            let o = rpo::attention::masked_mhsa_on(t, v[0], &mask, &w)?;
            probe_sum(t, o, s)
        });
    }
    worst
}

fn tiny_backbone(seed: u64) -> BackboneWeights {
    BackboneWeights::init(&tiny_config(), seed).unwrap().frozen()
}

pub fn encoder_prompt_gradients() -> f64 {
    let mut worst = 0.0;
    let cfg = tiny_config();
    let mut r = rng::stream(1, "grad/encoder");
    for s in 0..SHAPES as u64 {
        let w = tiny_backbone(s);
        let k = r.gen_range(1..4);
        let image = randn(&[cfg.n_x, cfg.patch_dim], 1.0, &mut r);
        let tokens = random_tokens(&cfg, &mut r);
        let pv = randn(&[k, cfg.d_v], 0.5, &mut r);
        let pt = randn(&[k, cfg.d_t], 0.5, &mut r);
        for mode in [AttentionMode::ReadOnly, AttentionMode::Unmasked] {
            check(&mut worst, std::slice::from_ref(&pv), &|t, v| {
                let b = w.bind(t);
                let e = encode_image(t, &b, &image, Some(v[0]), mode)?;
                probe_sum(t, e.prompt_features.unwrap(), s)
            });
            check(&mut worst, std::slice::from_ref(&pt), &|t, v| {
                let b = w.bind(t);
                let e = encode_caption(t, &b, &tokens, Some(v[0]), mode)?;
                probe_sum(t, e.prompt_features.unwrap(), s)
            });
        }
    }
    worst
}

pub fn encoder_weight_gradients() -> f64 {
    let mut worst = 0.0;
    let cfg = tiny_config();
    let mut r = rng::stream(1, "grad/weights");
    for s in 0..SHAPES as u64 {
        let w = tiny_backbone(s);
        let image = randn(&[cfg.n_x, cfg.patch_dim], 1.0, &mut r);
        let tokens = random_tokens(&cfg, &mut r);
        let leaves: Vec<Tensor> = w.towers.leaves().into_iter().map(|(_, t)| t.clone()).collect();
        check(&mut worst, &leaves, &|t, v| {
            let mut i = 0;
            let towers = w.towers.map(&mut |_, _| {
                i += 1;
                v[i - 1]
            });
            let b = BoundBackbone {
                config: &w.config,
                temperature: w.temperature,
                towers,
            };
            let e1 = encode_image(t, &b, &image, None, AttentionMode::ReadOnly)?;
            let e2 = encode_caption(t, &b, &tokens, None, AttentionMode::ReadOnly)?;
            let a = probe_sum(t, e1.class_feature, s)?;
            let c = probe_sum(t, e2.class_feature, s + 1)?;
            t.add(a, c)
        });
    }
    worst
}

pub fn pairwise_and_text_rpo_logits() -> f64 {
    let mut worst = 0.0;
    let mut r = rng::stream(1, "grad/scoring");
    for _ in 0..SHAPES {
        let k = r.gen_range(1..4);
        let d = r.gen_range(2..5);
        let b = r.gen_range(1..4);
        let c = r.gen_range(2..4);
        let mut inputs = Vec::new();
        for _ in 0..b + c {
            inputs.push(randn(&[k, d], 1.0, &mut r));
        }
        let targets: Vec<usize> = (0..b).map(|_| r.gen_range(0..c)).collect();
        check(&mut worst, &inputs, &|t, v| {
            let l = pairwise_logits(t, &v[..b], &v[b..], 0.07)?;
            t.cross_entropy(l, &targets)
        });
        let mut inputs: Vec<Tensor> = (0..b).map(|_| randn(&[1, d], 1.0, &mut r)).collect();
        for _ in 0..c {
            inputs.push(randn(&[k, d], 1.0, &mut r));
        }
        check(&mut worst, &inputs, &|t, v| {
            let l = text_rpo_logits(t, &v[..b], &v[b..], 0.07)?;
            t.cross_entropy(l, &targets)
        });
    }
    worst
}

pub const CASES: &[(&str, fn() -> f64)] = &[
    ("matmul", matmul),
    ("matmul_bt", matmul_bt),
    ("add/mul/scale", add_mul_scale),
    ("add_row", add_row),
    ("masked_softmax", masked_softmax),
    ("layer_norm", layer_norm),
    ("quick_gelu", quick_gelu),
    ("slice/concat", slices_and_concats),
    ("gather_rows", gather_rows_with_repeats),
    ("reshape/sum/mean", reshape_sum_mean),
    ("normalize_rows", normalize_rows),
    ("cross_entropy", cross_entropy),
    ("masked_mhsa", masked_mhsa_all_inputs),
    ("encoder prompts", encoder_prompt_gradients),
    ("encoder weights", encoder_weight_gradients),
    ("scoring logits", pairwise_and_text_rpo_logits),
];
