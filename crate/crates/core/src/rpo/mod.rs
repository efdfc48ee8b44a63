//! The trainable read-only prompt set, its initializers and the scoring
//! rules built on prompt features.

mod prompts;
mod scoring;

pub use prompts::{
    random_initialize, st_initialize, InitSpec, Modality, ReadOnlyPromptSet, RANDOM_INIT_STD,
};
pub use scoring::{
    class_probabilities, flatten_normalized, mean_normalized, pairwise_logits,
    pairwise_similarity, text_rpo_logits, text_rpo_similarity, zero_shot_probabilities,
};
