use thiserror::Error;

pub type Result<T, E = RpoError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RpoError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("masked softmax: row {row} has no unmasked column")]
    DegenerateRow { row: usize },

    #[error("{op}: zero-norm vector")]
    DegenerateVector { op: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("token sequence of length {len} exceeds capacity {max}")]
    Length { len: usize, max: usize },

    #[error("missing gradient for {0}; backward pass did not reach it")]
    MissingGradient(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("empty evaluation split")]
    EmptySplit,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("backbone checksum mismatch: expected {expected}, found {found}")]
    ChecksumMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RpoError {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        RpoError::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        RpoError::InvalidConfig(msg.into())
    }
}
