//! Similarity and probability rules.
//!
//! Eager functions score plain tensors. The `*_logits` functions build
//! the same scores on a tape so they can be differentiated.

use crate::error::{Result, RpoError};
use crate::tensor_core::{cosine_slices, softmax, Tape, Tensor, Var};

fn check_matrix(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        other => Err(RpoError::shape(op, other, &[0, 0])),
    }
}

/// `(1/K) Σ cos(v_i, t_i)` over index-matched rows of `K × d` blocks.
pub fn pairwise_similarity(v: &Tensor, t: &Tensor) -> Result<f64> {
    let (kv, dv) = check_matrix(v, "pairwise_similarity")?;
    let (kt, dt) = check_matrix(t, "pairwise_similarity")?;
    if kv != kt || dv != dt || kv == 0 {
        return Err(RpoError::shape("pairwise_similarity", v.shape(), t.shape()));
    }
    let mut sum = 0.0;
    for i in 0..kv {
        sum += cosine_slices(v.row(i), t.row(i))?;
    }
    Ok((sum / kv as f64).clamp(-1.0, 1.0))
}

/// `softmax(sims / τ)`.
pub fn class_probabilities(sims: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(RpoError::config(format!("temperature must be positive, got {temperature}")));
    }
    if sims.is_empty() {
        return Err(RpoError::EmptySplit);
    }
    let scaled: Vec<f64> = sims.iter().map(|s| s / temperature).collect();
    Ok(softmax(&scaled))
}

/// Zero-shot rule: cosine of the image class feature against each class's
/// text class feature, then [`class_probabilities`].
pub fn zero_shot_probabilities(
    image: &Tensor,
    texts: &[Tensor],
    temperature: f64,
) -> Result<Vec<f64>> {
    let sims = texts
        .iter()
        .map(|t| {
            if t.numel() != image.numel() {
                return Err(RpoError::shape("zero_shot_probabilities", image.shape(), t.shape()));
            }
            cosine_slices(image.data(), t.data())
        })
        .collect::<Result<Vec<_>>>()?;
    class_probabilities(&sims, temperature)
}

/// `(1/K) Σ cos(g, t_i)` for a global image feature `g` and `K × d` text
/// prompt features.
pub fn text_rpo_similarity(image: &Tensor, t: &Tensor) -> Result<f64> {
    let (k, d) = check_matrix(t, "text_rpo_similarity")?;
    if k == 0 || image.numel() != d {
        return Err(RpoError::shape("text_rpo_similarity", image.shape(), t.shape()));
    }
    let mut sum = 0.0;
    for i in 0..k {
        sum += cosine_slices(image.data(), t.row(i))?;
    }
    Ok((sum / k as f64).clamp(-1.0, 1.0))
}

/// Row-normalizes a `K × d` block and flattens it to `1 × K·d`.
pub fn flatten_normalized(tape: &mut Tape, features: Var) -> Result<Var> {
    let n = tape.normalize_rows(features)?;
    let len = tape.value(n).numel();
    tape.reshape(n, vec![1, len])
}

/// Pairwise-ensemble logits `[B × C]` divided by `τ`, from per-image and
/// per-class `K × d` prompt features.
pub fn pairwise_logits(
    tape: &mut Tape,
    images: &[Var],
    classes: &[Var],
    temperature: f64,
) -> Result<Var> {
    let k = match images.first() {
        Some(v) => tape.shape(*v)[0],
        None => return Err(RpoError::EmptySplit),
    };
    if classes.is_empty() {
        return Err(RpoError::EmptySplit);
    }
    let flat_v = images
        .iter()
        .map(|v| flatten_normalized(tape, *v))
        .collect::<Result<Vec<_>>>()?;
    let flat_t = classes
        .iter()
        .map(|t| flatten_normalized(tape, *t))
        .collect::<Result<Vec<_>>>()?;
    let vm = tape.concat_rows(&flat_v)?;
    let tm = tape.concat_rows(&flat_t)?;
    let sims = tape.matmul_bt(vm, tm)?;
    Ok(tape.scale(sims, 1.0 / (k as f64 * temperature)))
}

/// Mean of the row-normalized `K × d` block as a `1 × d` row.
pub fn mean_normalized(tape: &mut Tape, features: Var) -> Result<Var> {
    let k = tape.shape(features)[0];
    let n = tape.normalize_rows(features)?;
    let avg = tape.constant(Tensor::filled(&[1, k], 1.0 / k as f64));
    tape.matmul(avg, n)
}

/// text-RPO logits `[B × C]` divided by `τ`, from `1 × d` global image
/// features and per-class `K × d` text prompt features.
pub fn text_rpo_logits(
    tape: &mut Tape,
    images: &[Var],
    classes: &[Var],
    temperature: f64,
) -> Result<Var> {
    if images.is_empty() || classes.is_empty() {
        return Err(RpoError::EmptySplit);
    }
    let g = images
        .iter()
        .map(|v| tape.normalize_rows(*v))
        .collect::<Result<Vec<_>>>()?;
    let m = classes
        .iter()
        .map(|t| mean_normalized(tape, *t))
        .collect::<Result<Vec<_>>>()?;
    let gm = tape.concat_rows(&g)?;
    let tm = tape.concat_rows(&m)?;
    let sims = tape.matmul_bt(gm, tm)?;
    Ok(tape.scale(sims, 1.0 / temperature))
}
