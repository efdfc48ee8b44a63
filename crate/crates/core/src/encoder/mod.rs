//! Frozen dual-encoder backbone: configuration, weights, tokenizer and the
//! forward pass with appended prompts.

mod config;
mod forward;
mod tokenizer;
mod weights;

pub use config::EncoderConfig;
pub use forward::{
    assemble_text_input, assemble_visual_input, embed_patches, embed_text, encode_caption,
    encode_image, encode_text, encode_visual, text_mask, visual_mask, AttentionMode, Encoded,
};
pub use tokenizer::{TokenSequence, Tokenizer, PAD};
pub use weights::{
    BackboneWeights, Block, BoundBackbone, TextTower, Towers, VisualTower, DEFAULT_TEMPERATURE,
};
