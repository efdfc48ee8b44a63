//! Read-only attention masks and masked multi-head self-attention.
//!
//! Masks are additive: `0.0` keeps a key, `-inf` removes it. Sequences
//! are laid out as an original block (special token plus content tokens)
//! followed by `K` prompt tokens. Both read-only masks hide every prompt
//! column from every query, so original tokens never see a prompt and
//! prompts only read original tokens.

use std::sync::Arc;

use crate::error::{Result, RpoError};
use crate::tensor_core::{Tape, Tensor, Var};

const BLOCKED: f64 = f64::NEG_INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Visual,
    Textual,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    entries: Arc<Vec<f64>>,
    kind: MaskKind,
}

impl AttentionMask {
    /// Mask from raw additive entries, each of which must be `0` or `-inf`.
    pub fn from_entries(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(RpoError::shape("attention mask", &[rows, cols], &[entries.len()]));
        }
        if entries.iter().any(|&e| e != 0.0 && e != BLOCKED) {
            return Err(RpoError::config("mask entries must be 0 or -inf"));
        }
        Ok(AttentionMask {
            rows,
            cols,
            entries: Arc::new(entries),
            kind: MaskKind::Custom,
        })
    }

    /// Square mask with no blocked entries.
    pub fn open(n: usize) -> Self {
        AttentionMask {
            rows: n,
            cols: n,
            entries: Arc::new(vec![0.0; n * n]),
            kind: MaskKind::Custom,
        }
    }

    /// Square mask where query `i` sees keys `j <= i`.
    pub fn causal(n: usize) -> Self {
        let mut m = Self::open(n);
        for i in 0..n {
            for j in i + 1..n {
                m.block(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn is_blocked(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.cols + j] == BLOCKED
    }

    pub fn block(&mut self, i: usize, j: usize) {
        let cols = self.cols;
        Arc::make_mut(&mut self.entries)[i * cols + j] = BLOCKED;
    }

    pub fn blocked_count(&self) -> usize {
        self.entries.iter().filter(|&&e| e == BLOCKED).count()
    }

    /// Index of the first row without any visible key.
    pub fn first_empty_row(&self) -> Option<usize> {
        (0..self.rows).find(|&i| (0..self.cols).all(|j| self.is_blocked(i, j)))
    }

    /// Text grid, one line per row: `.` for a visible key, `X` for a
    /// blocked one.
    pub fn dump(&self) -> String {
        let mut out = String::with_capacity(self.rows * (self.cols + 1));
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.push(if self.is_blocked(i, j) { 'X' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    fn with_kind(mut self, kind: MaskKind) -> Self {
        self.kind = kind;
        self
    }
}

fn check_counts(tokens: usize, k: usize, what: &str) -> Result<()> {
    if tokens == 0 {
        return Err(RpoError::config(format!("{what} token count must be at least 1")));
    }
    if k == 0 {
        return Err(RpoError::config("prompt count K must be at least 1"));
    }
    Ok(())
}

/// Visual read-only mask of side `1 + n_x + k`: column `j` (1-based) is
/// blocked in every row iff `j > 1 + n_x`.
pub fn build_visual_mask(n_x: usize, k: usize) -> Result<AttentionMask> {
    check_counts(n_x, k, "visual")?;
    Ok(visual_mask_unchecked(n_x, k))
}

pub(crate) fn visual_mask_unchecked(n_x: usize, k: usize) -> AttentionMask {
    let original = 1 + n_x;
    let n = original + k;
    let mut m = AttentionMask::open(n);
    for i in 0..n {
        for j in original..n {
            m.block(i, j);
        }
    }
    m.with_kind(MaskKind::Visual)
}

/// Textual read-only mask of side `1 + n_y + k`. Within the original
/// block a query sees itself and earlier tokens; prompt columns are
/// blocked everywhere; prompt rows see every original column.
pub fn build_text_mask(n_y: usize, k: usize) -> Result<AttentionMask> {
    check_counts(n_y, k, "text")?;
    Ok(text_mask_unchecked(n_y, k))
}

pub(crate) fn text_mask_unchecked(n_y: usize, k: usize) -> AttentionMask {
    let original = 1 + n_y;
    let n = original + k;
    let mut m = AttentionMask::open(n);
    for i in 0..n {
        for j in 0..n {
            let prompt_key = j >= original;
            let future_original = i < original && j < original && j > i;
            if prompt_key || future_original {
                m.block(i, j);
            }
        }
    }
    m.with_kind(MaskKind::Textual)
}

/// Frozen projections of one multi-head self-attention layer. Heads are
/// contiguous column blocks of the fused `d×d` matrices.
#[derive(Debug, Clone)]
pub struct MhsaWeights<T> {
    pub heads: usize,
    pub w_q: T,
    pub b_q: T,
    pub w_k: T,
    pub b_k: T,
    pub w_v: T,
    pub b_v: T,
    pub w_o: T,
    pub b_o: T,
}

impl<T> MhsaWeights<T> {
    pub fn map<'s, U>(
        &'s self,
        prefix: &str,
        f: &mut dyn FnMut(String, &'s T) -> U,
    ) -> MhsaWeights<U> {
        MhsaWeights {
            heads: self.heads,
            w_q: f(format!("{prefix}.w_q"), &self.w_q),
            b_q: f(format!("{prefix}.b_q"), &self.b_q),
            w_k: f(format!("{prefix}.w_k"), &self.w_k),
            b_k: f(format!("{prefix}.b_k"), &self.b_k),
            w_v: f(format!("{prefix}.w_v"), &self.w_v),
            b_v: f(format!("{prefix}.b_v"), &self.b_v),
            w_o: f(format!("{prefix}.w_o"), &self.w_o),
            b_o: f(format!("{prefix}.b_o"), &self.b_o),
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        f(format!("{prefix}.w_q"), &mut self.w_q);
        f(format!("{prefix}.b_q"), &mut self.b_q);
        f(format!("{prefix}.w_k"), &mut self.w_k);
        f(format!("{prefix}.b_k"), &mut self.b_k);
        f(format!("{prefix}.w_v"), &mut self.w_v);
        f(format!("{prefix}.b_v"), &mut self.b_v);
        f(format!("{prefix}.w_o"), &mut self.w_o);
        f(format!("{prefix}.b_o"), &mut self.b_o);
    }
}

impl MhsaWeights<Tensor> {
    pub fn width(&self) -> usize {
        self.w_q.rows()
    }

    /// Checks shapes and head divisibility.
    pub fn validate(&self) -> Result<()> {
        let d = self.width();
        if self.heads == 0 || !d.is_multiple_of(self.heads) {
            return Err(RpoError::config(format!(
                "width {d} is not divisible by {} heads",
                self.heads
            )));
        }
        for w in [&self.w_q, &self.w_k, &self.w_v, &self.w_o] {
            if w.shape() != [d, d] {
                return Err(RpoError::shape("mhsa weights", w.shape(), &[d, d]));
            }
        }
        for b in [&self.b_q, &self.b_k, &self.b_v, &self.b_o] {
            if b.numel() != d {
                return Err(RpoError::shape("mhsa bias", b.shape(), &[d]));
            }
        }
        Ok(())
    }
}

/// `softmax(Q Kᵀ / √d_head + M) V` per head, concatenated and projected.
pub fn masked_mhsa_on(
    tape: &mut Tape,
    x: Var,
    mask: &AttentionMask,
    w: &MhsaWeights<Var>,
) -> Result<Var> {
    let n = tape.shape(x)[0];
    if mask.rows() != n || mask.cols() != n {
        return Err(RpoError::shape("masked_mhsa", tape.shape(x), &[mask.rows(), mask.cols()]));
    }
    let d = tape.shape(w.w_q)[0];
    if tape.shape(x)[1] != d {
        return Err(RpoError::shape("masked_mhsa", tape.shape(x), tape.shape(w.w_q)));
    }
    let dh = d / w.heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let q = tape.matmul(x, w.w_q)?;
    let q = tape.add_row(q, w.b_q)?;
    let k = tape.matmul(x, w.w_k)?;
    let k = tape.add_row(k, w.b_k)?;
    let v = tape.matmul(x, w.w_v)?;
    let v = tape.add_row(v, w.b_v)?;

    let mut heads = Vec::with_capacity(w.heads);
    for h in 0..w.heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let scores = tape.matmul_bt(qh, kh)?;
        let scores = tape.scale(scores, scale);
        let attn = tape.masked_softmax(scores, mask)?;
        heads.push(tape.matmul(attn, vh)?);
    }
    let cat = if heads.len() == 1 {
        heads[0]
    } else {
        tape.concat_cols(&heads)?
    };
    let out = tape.matmul(cat, w.w_o)?;
    tape.add_row(out, w.b_o)
}

/// Eager form of [`masked_mhsa_on`] for frozen weights.
pub fn masked_mhsa(x: &Tensor, mask: &AttentionMask, w: &MhsaWeights<Tensor>) -> Result<Tensor> {
    w.validate()?;
    let mut tape = Tape::new();
    let xv = tape.leaf(x);
    let bound = w.map("mhsa", &mut |_, t| tape.leaf(t));
    let out = masked_mhsa_on(&mut tape, xv, mask, &bound)?;
    Ok(tape.value(out).clone())
}
