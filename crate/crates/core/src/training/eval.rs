//! Top-1 accuracy on a task split.

use rayon::prelude::*;

use crate::encoder::{AttentionMode, BackboneWeights, Tokenizer};
use crate::error::{Result, RpoError};
use crate::experiments::{FewShotTask, Split};
use crate::rpo::{pairwise_similarity, text_rpo_similarity, zero_shot_probabilities, ReadOnlyPromptSet};
use crate::tensor_core::cosine_slices;

use super::features::{caption_features, image_features};

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

fn split_setup(task: &FewShotTask, split: Split) -> Result<(Vec<usize>, Vec<String>)> {
    let ids = task.split_classes(split).to_vec();
    if ids.is_empty() || task.test_examples(split).is_empty() {
        return Err(RpoError::EmptySplit);
    }
    let names = task.class_names(&ids);
    Ok((ids, names))
}

fn accuracy(hits: Vec<bool>) -> f64 {
    hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64
}

/// Accuracy of prompt-based scoring over the split's own classes. Class
/// features are recomputed for each candidate class name with the same
/// (class-agnostic) text prompts.
pub fn evaluate(
    w: &BackboneWeights,
    tokenizer: &Tokenizer,
    prompts: &ReadOnlyPromptSet,
    task: &FewShotTask,
    split: Split,
    mode: AttentionMode,
) -> Result<f64> {
    prompts.check_against(w)?;
    let (ids, names) = split_setup(task, split)?;
    let text: Vec<_> = names
        .par_iter()
        .map(|n| {
            caption_features(w, tokenizer, n, Some(&prompts.textual), mode)
                .map(|f| f.prompt_features.expect("prompts supplied"))
        })
        .collect::<Result<_>>()?;
    let hits = task
        .test_examples(split)
        .par_iter()
        .map(|e| {
            let f = image_features(w, &e.image, prompts.visual.as_ref(), mode)?;
            let sims = text
                .iter()
                .map(|t| match &f.prompt_features {
                    Some(v) => pairwise_similarity(v, t),
                    None => text_rpo_similarity(&f.class_feature, t),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ids[argmax(&sims)] == e.label)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(accuracy(hits))
}

/// Accuracy of the frozen backbone's zero-shot rule on the split.
pub fn zero_shot_accuracy(
    w: &BackboneWeights,
    tokenizer: &Tokenizer,
    task: &FewShotTask,
    split: Split,
) -> Result<f64> {
    let (ids, names) = split_setup(task, split)?;
    let mode = AttentionMode::ReadOnly;
    let text: Vec<_> = names
        .par_iter()
        .map(|n| caption_features(w, tokenizer, n, None, mode).map(|f| f.class_feature))
        .collect::<Result<_>>()?;
    let hits = task
        .test_examples(split)
        .par_iter()
        .map(|e| {
            let img = image_features(w, &e.image, None, mode)?.class_feature;
            let probs = zero_shot_probabilities(&img, &text, w.temperature)?;
            Ok(ids[argmax(&probs)] == e.label)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(accuracy(hits))
}

/// Mean cosine between each test image's class feature and its own
/// class's caption feature, a quick alignment diagnostic.
pub fn zero_shot_alignment(w: &BackboneWeights, tokenizer: &Tokenizer, task: &FewShotTask) -> Result<f64> {
    let mode = AttentionMode::ReadOnly;
    let text: Vec<_> = task
        .classes
        .iter()
        .map(|n| caption_features(w, tokenizer, n, None, mode).map(|f| f.class_feature))
        .collect::<Result<_>>()?;
    let mut sum = 0.0;
    for e in &task.test {
        let img = image_features(w, &e.image, None, mode)?.class_feature;
        sum += cosine_slices(img.data(), text[e.label].data())?;
    }
    Ok(sum / task.test.len() as f64)
}
