//! Contrastive pre-training of the backbone and few-shot adaptation of
//! read-only prompts.

mod adapt;
mod eval;
mod features;
mod pretrain;

pub use adapt::{
    adapt_rpo, initial_prompts, AdaptConfig, Adapted, EpochSummary, LogRecord, TrainingLog,
};
pub use eval::{evaluate, zero_shot_accuracy, zero_shot_alignment};
pub use features::{caption_features, image_features, Features};
pub use pretrain::{
    contrastive_loss, contrastive_loss_on, contrastive_pretrain, pretrain_step, Adam, Pair,
    PretrainConfig, PretrainCorpus, PretrainRecord, Pretrained,
};
