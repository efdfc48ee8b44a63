//! Token assembly and tower evaluation.
//!
//! Visual sequences are `[special; patches; prompts]`. Text sequences are
//! `[words + padding; special; prompts]`: the end-of-text special token
//! closes the original block so that, under causal attention, it is the
//! one original position that sees every word.

use serde::{Deserialize, Serialize};

use crate::attention::{masked_mhsa_on, text_mask_unchecked, visual_mask_unchecked, AttentionMask};
use crate::error::{Result, RpoError};
use crate::tensor_core::{Tape, Tensor, Var};

use super::tokenizer::TokenSequence;
use super::weights::{Block, BoundBackbone, TextTower, VisualTower};
use super::EncoderConfig;

/// How appended prompts take part in self-attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionMode {
    /// Prompts read original tokens; nothing reads prompts.
    ReadOnly,
    /// Prompts are ordinary tokens: bidirectional on the visual side,
    /// causal on the text side.
    Unmasked,
}

/// Output of one tower pass.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    /// Final hidden states of every position, `N × d`.
    pub hidden: Var,
    /// Projected special-token feature, `1 × d_joint`.
    pub class_feature: Var,
    /// Projected prompt features, `K × d_joint`, when prompts are present.
    pub prompt_features: Option<Var>,
}

/// Maps raw patches (`n_x × patch_dim`) to patch embeddings with positions.
pub fn embed_patches(tape: &mut Tape, w: &VisualTower<Var>, image: &Tensor) -> Result<Var> {
    let n_x = tape.shape(w.pos)[0];
    let patch_dim = tape.shape(w.patch_w)[0];
    if image.shape() != [n_x, patch_dim] {
        return Err(RpoError::shape("embed_patches", image.shape(), &[n_x, patch_dim]));
    }
    let x = tape.constant(image.clone());
    let e = tape.matmul(x, w.patch_w)?;
    let e = tape.add_row(e, w.patch_b)?;
    tape.add(e, w.pos)
}

fn check_prompts(tape: &Tape, prompts: Option<Var>, width: usize) -> Result<()> {
    if let Some(p) = prompts {
        let shape = tape.shape(p);
        if shape.len() != 2 || shape[1] != width {
            return Err(RpoError::shape("prompts", shape, &[0, width]));
        }
        if shape[0] == 0 {
            return Err(RpoError::config("prompt count K must be at least 1"));
        }
    }
    Ok(())
}

/// `[special; patches; prompts]`. `None` assembles the prompt-free input.
pub fn assemble_visual_input(
    tape: &mut Tape,
    w: &VisualTower<Var>,
    patches: Var,
    prompts: Option<Var>,
) -> Result<Var> {
    let d = tape.shape(w.special)[1];
    if tape.shape(patches).len() != 2 || tape.shape(patches)[1] != d {
        return Err(RpoError::shape("assemble_visual_input", tape.shape(patches), &[0, d]));
    }
    check_prompts(tape, prompts, d)?;
    let mut parts = vec![w.special, patches];
    parts.extend(prompts);
    tape.concat_rows(&parts)
}

/// Word embeddings plus positions for a padded caption.
pub fn embed_text(tape: &mut Tape, w: &TextTower<Var>, tokens: &TokenSequence) -> Result<Var> {
    let n_y = tape.shape(w.pos)[0];
    if tokens.ids.len() != n_y {
        return Err(RpoError::Length {
            len: tokens.ids.len(),
            max: n_y,
        });
    }
    let e = tape.gather_rows(w.token_embed, &tokens.ids)?;
    tape.add(e, w.pos)
}

/// `[words; special; prompts]`. `None` assembles the prompt-free input.
pub fn assemble_text_input(
    tape: &mut Tape,
    w: &TextTower<Var>,
    words: Var,
    prompts: Option<Var>,
) -> Result<Var> {
    let d = tape.shape(w.special)[1];
    if tape.shape(words).len() != 2 || tape.shape(words)[1] != d {
        return Err(RpoError::shape("assemble_text_input", tape.shape(words), &[0, d]));
    }
    check_prompts(tape, prompts, d)?;
    let mut parts = vec![words, w.special];
    parts.extend(prompts);
    tape.concat_rows(&parts)
}

/// Visual mask for `k` prompts (`k = 0` gives the open prompt-free mask).
pub fn visual_mask(config: &EncoderConfig, k: usize, mode: AttentionMode) -> AttentionMask {
    match (mode, k) {
        (_, 0) | (AttentionMode::Unmasked, _) => AttentionMask::open(config.visual_len(k)),
        (AttentionMode::ReadOnly, _) => visual_mask_unchecked(config.n_x, k),
    }
}

/// Text mask for `k` prompts and a caption with `valid_len` real tokens.
/// Padding columns are hidden from every query, original or prompt.
pub fn text_mask(
    config: &EncoderConfig,
    k: usize,
    valid_len: usize,
    mode: AttentionMode,
) -> AttentionMask {
    let n_y = config.n_y;
    let mut mask = match mode {
        AttentionMode::ReadOnly => text_mask_unchecked(n_y, k),
        AttentionMode::Unmasked => AttentionMask::causal(config.text_len(k)),
    };
    for i in 0..mask.rows() {
        for j in valid_len..n_y {
            mask.block(i, j);
        }
    }
    mask
}

fn run_blocks(
    tape: &mut Tape,
    blocks: &[Block<Var>],
    mut x: Var,
    mask: &AttentionMask,
    eps: f64,
) -> Result<Var> {
    for b in blocks {
        let h = tape.layer_norm(x, b.ln1_g, b.ln1_b, eps)?;
        let a = masked_mhsa_on(tape, h, mask, &b.attn)?;
        x = tape.add(x, a)?;
        let h = tape.layer_norm(x, b.ln2_g, b.ln2_b, eps)?;
        let h = tape.matmul(h, b.fc1_w)?;
        let h = tape.add_row(h, b.fc1_b)?;
        let h = tape.quick_gelu(h);
        let h = tape.matmul(h, b.fc2_w)?;
        let h = tape.add_row(h, b.fc2_b)?;
        x = tape.add(x, h)?;
    }
    Ok(x)
}

fn project(tape: &mut Tape, rows: Var, ln_g: Var, ln_b: Var, proj: Var, eps: f64) -> Result<Var> {
    let h = tape.layer_norm(rows, ln_g, ln_b, eps)?;
    tape.matmul(h, proj)
}

#[allow(clippy::too_many_arguments)]
fn encode(
    tape: &mut Tape,
    blocks: &[Block<Var>],
    (ln_g, ln_b, proj): (Var, Var, Var),
    assembled: Var,
    mask: &AttentionMask,
    eps: f64,
    special_row: usize,
    original: usize,
) -> Result<Encoded> {
    let n = tape.shape(assembled)[0];
    if n < original {
        return Err(RpoError::shape("encode", tape.shape(assembled), &[original]));
    }
    if mask.rows() != n || mask.cols() != n {
        return Err(RpoError::shape("encode", tape.shape(assembled), &[mask.rows(), mask.cols()]));
    }
    let hidden = run_blocks(tape, blocks, assembled, mask, eps)?;
    let special = tape.slice_rows(hidden, special_row, 1)?;
    let class_feature = project(tape, special, ln_g, ln_b, proj, eps)?;
    let k = n - original;
    let prompt_features = if k > 0 {
        let p = tape.slice_rows(hidden, original, k)?;
        Some(project(tape, p, ln_g, ln_b, proj, eps)?)
    } else {
        None
    };
    Ok(Encoded {
        hidden,
        class_feature,
        prompt_features,
    })
}

/// Runs the visual tower on an assembled `[special; patches; prompts]`
/// sequence.
pub fn encode_visual(
    tape: &mut Tape,
    w: &BoundBackbone<'_>,
    assembled: Var,
    mask: &AttentionMask,
) -> Result<Encoded> {
    let v = &w.towers.visual;
    encode(
        tape,
        &v.blocks,
        (v.ln_post_g, v.ln_post_b, v.proj),
        assembled,
        mask,
        w.config.ln_eps,
        0,
        1 + w.config.n_x,
    )
}

/// Runs the text tower on an assembled `[words; special; prompts]`
/// sequence.
pub fn encode_text(
    tape: &mut Tape,
    w: &BoundBackbone<'_>,
    assembled: Var,
    mask: &AttentionMask,
) -> Result<Encoded> {
    let t = &w.towers.text;
    encode(
        tape,
        &t.blocks,
        (t.ln_post_g, t.ln_post_b, t.proj),
        assembled,
        mask,
        w.config.ln_eps,
        w.config.n_y,
        1 + w.config.n_y,
    )
}

/// Embeds, assembles and encodes one image.
pub fn encode_image(
    tape: &mut Tape,
    w: &BoundBackbone<'_>,
    image: &Tensor,
    prompts: Option<Var>,
    mode: AttentionMode,
) -> Result<Encoded> {
    let patches = embed_patches(tape, &w.towers.visual, image)?;
    let x = assemble_visual_input(tape, &w.towers.visual, patches, prompts)?;
    let k = prompts.map_or(0, |p| tape.shape(p)[0]);
    let mask = visual_mask(w.config, k, mode);
    encode_visual(tape, w, x, &mask)
}

/// Embeds, assembles and encodes one caption.
pub fn encode_caption(
    tape: &mut Tape,
    w: &BoundBackbone<'_>,
    tokens: &TokenSequence,
    prompts: Option<Var>,
    mode: AttentionMode,
) -> Result<Encoded> {
    let words = embed_text(tape, &w.towers.text, tokens)?;
    let x = assemble_text_input(tape, &w.towers.text, words, prompts)?;
    let k = prompts.map_or(0, |p| tape.shape(p)[0]);
    let mask = text_mask(w.config, k, tokens.valid_len, mode);
    encode_text(tape, w, x, &mask)
}
