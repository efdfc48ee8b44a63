//! Read-only prompts trained against a frozen dual-encoder transformer.
//!
//! Learnable prompt tokens are appended to both encoders of a small
//! contrastively pre-trained image/text model. Attention masks let the
//! prompts read the original tokens while keeping every original hidden
//! state exactly as the frozen model computes it.

pub mod attention;
pub mod checkpoint;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod experiments;
pub mod rpo;
pub mod tensor_core;
pub mod training;

pub use error::{Result, RpoError};
