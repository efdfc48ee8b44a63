//! Eager (gradient-free) feature extraction.

use crate::encoder::{encode_caption, encode_image, AttentionMode, BackboneWeights, Tokenizer};
use crate::error::Result;
use crate::tensor_core::{Tape, Tensor};

/// Projected features of one tower pass.
#[derive(Debug, Clone)]
pub struct Features {
    /// `1 × d_joint` special-token feature.
    pub class_feature: Tensor,
    /// `K × d_joint` prompt features, when prompts were supplied.
    pub prompt_features: Option<Tensor>,
    /// Final hidden states of every position.
    pub hidden: Tensor,
}

fn collect(tape: &Tape, enc: crate::encoder::Encoded) -> Features {
    Features {
        class_feature: tape.value(enc.class_feature).clone(),
        prompt_features: enc.prompt_features.map(|p| tape.value(p).clone()),
        hidden: tape.value(enc.hidden).clone(),
    }
}

pub fn image_features(
    w: &BackboneWeights,
    image: &Tensor,
    prompts: Option<&Tensor>,
    mode: AttentionMode,
) -> Result<Features> {
    let mut tape = Tape::new();
    let bound = w.bind(&mut tape);
    let p = prompts.map(|p| tape.constant(p.clone()));
    let enc = encode_image(&mut tape, &bound, image, p, mode)?;
    Ok(collect(&tape, enc))
}

pub fn caption_features(
    w: &BackboneWeights,
    tokenizer: &Tokenizer,
    class_name: &str,
    prompts: Option<&Tensor>,
    mode: AttentionMode,
) -> Result<Features> {
    let tokens = tokenizer.caption(class_name, w.config.n_y)?;
    let mut tape = Tape::new();
    let bound = w.bind(&mut tape);
    let p = prompts.map(|p| tape.constant(p.clone()));
    let enc = encode_caption(&mut tape, &bound, &tokens, p, mode)?;
    Ok(collect(&tape, enc))
}
