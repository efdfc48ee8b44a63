//! Dense tensors, forward kernels, reverse-mode differentiation and the
//! prompt optimizer.

mod ops;
mod optim;
pub mod rng;
mod tape;
mod tensor;

pub use ops::{cosine_similarity, layer_norm, masked_softmax_rows, matmul, softmax};
pub(crate) use ops::cosine_slices;
pub use optim::{sgd_step, Sgd};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
