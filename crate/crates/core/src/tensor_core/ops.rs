//! Forward kernels shared by the eager API and the tape.
//!
//! Every reduction accumulates in ascending index order starting from
//! `0.0`, and each output element only reads its own row of the left
//! operand. The attention non-interference checks compare results
//! bit-for-bit and depend on both properties.

use crate::attention::AttentionMask;
use crate::error::{Result, RpoError};

use super::Tensor;

/// `a[m×k] · b[k×n]`, i-k-j loop order.
pub(crate) fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * b_pj;
            }
        }
    }
    out
}

/// `a[m×k] · b[n×k]ᵀ`.
pub(crate) fn matmul_bt_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (x, y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// `a[k×m]ᵀ · b[k×n]`.
pub(crate) fn matmul_at_kernel(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &a_pi) in a_row.iter().enumerate() {
            if a_pi == 0.0 {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                *o += a_pi * b_pj;
            }
        }
    }
    out
}

pub(crate) fn masked_softmax_kernel(
    logits: &[f64],
    mask: &[f64],
    rows: usize,
    cols: usize,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        let l = &logits[i * cols..(i + 1) * cols];
        let m = &mask[i * cols..(i + 1) * cols];
        let o = &mut out[i * cols..(i + 1) * cols];
        let mut max = f64::NEG_INFINITY;
        for (dst, (x, a)) in o.iter_mut().zip(l.iter().zip(m)) {
            *dst = x + a;
            if *dst > max {
                max = *dst;
            }
        }
        if max == f64::NEG_INFINITY {
            if m.iter().all(|a| *a == f64::NEG_INFINITY) {
                return Err(RpoError::DegenerateRow { row: i });
            }
            // Open columns exist but none compare: non-finite logits.
            o.fill(f64::NAN);
            continue;
        }
        let mut sum = 0.0;
        for z in o.iter_mut() {
            // exp(-inf) is exactly 0, so masked columns vanish from both
            // the numerator and the running sum.
            *z = (*z - max).exp();
            sum += *z;
        }
        for z in o.iter_mut() {
            *z /= sum;
        }
    }
    Ok(out)
}

pub(crate) struct LayerNormOut {
    pub y: Vec<f64>,
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub(crate) fn layer_norm_kernel(
    x: &[f64],
    gain: &[f64],
    bias: &[f64],
    d: usize,
    eps: f64,
) -> LayerNormOut {
    let rows = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mut mean = 0.0;
        for v in xr {
            mean += v;
        }
        mean /= d as f64;
        let mut var = 0.0;
        for v in xr {
            var += (v - mean) * (v - mean);
        }
        var /= d as f64;
        let rs = 1.0 / (var + eps).sqrt();
        rstd[r] = rs;
        for c in 0..d {
            let h = (xr[c] - mean) * rs;
            xhat[r * d + c] = h;
            y[r * d + c] = h * gain[c] + bias[c];
        }
    }
    LayerNormOut { y, xhat, rstd }
}

const GELU_ALPHA: f64 = 1.702;

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x · σ(1.702 x)`, the activation used by CLIP's MLP blocks.
pub(crate) fn quick_gelu(x: f64) -> f64 {
    x * sigmoid(GELU_ALPHA * x)
}

pub(crate) fn quick_gelu_grad(x: f64) -> f64 {
    let s = sigmoid(GELU_ALPHA * x);
    s + GELU_ALPHA * x * s * (1.0 - s)
}

fn require_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        other => Err(RpoError::shape(op, other, &[0, 0])),
    }
}

/// Matrix product of `a[m×k]` and `b[k×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = require_matrix("matmul", a)?;
    let (k2, n) = require_matrix("matmul", b)?;
    if k != k2 {
        return Err(RpoError::shape("matmul", a.shape(), b.shape()));
    }
    Tensor::new(vec![m, n], matmul_kernel(a.data(), b.data(), m, k, n))
}

/// Row-wise softmax of `logits + mask`. Masked columns come out as exact
/// zeros; a row with no unmasked column is an error.
pub fn masked_softmax_rows(logits: &Tensor, mask: &AttentionMask) -> Result<Tensor> {
    let (m, n) = require_matrix("masked_softmax_rows", logits)?;
    if (m, n) != (mask.rows(), mask.cols()) {
        return Err(RpoError::shape(
            "masked_softmax_rows",
            logits.shape(),
            &[mask.rows(), mask.cols()],
        ));
    }
    let out = masked_softmax_kernel(logits.data(), mask.entries(), m, n)?;
    Tensor::new(vec![m, n], out)
}

/// Normalizes over the last axis, then applies `gain` and `bias`.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    if eps <= 0.0 {
        return Err(RpoError::config("layer_norm eps must be positive"));
    }
    let d = x.cols();
    if gain.numel() != d || bias.numel() != d {
        return Err(RpoError::shape("layer_norm", x.shape(), gain.shape()));
    }
    let out = layer_norm_kernel(x.data(), gain.data(), bias.data(), d, eps);
    Tensor::new(x.shape().to_vec(), out.y)
}

pub fn cosine_similarity(u: &Tensor, v: &Tensor) -> Result<f64> {
    cosine_slices(u.data(), v.data())
}

pub(crate) fn cosine_slices(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(RpoError::shape("cosine_similarity", &[u.len()], &[v.len()]));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(RpoError::DegenerateVector {
            op: "cosine_similarity",
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Plain softmax of a slice, max-shifted.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
