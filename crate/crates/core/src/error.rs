use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("bad depth {0}: a network needs at least 3 blocks")]
    BadDepth(usize),

    #[error("block index {index} out of range 1..={depth}")]
    IndexOutOfRange { index: usize, depth: usize },

    #[error("block 2 is {0:?}, corrector construction needs a residual block there")]
    NotResidual(crate::nn::BlockKind),

    #[error("depth mismatch: corrector has {corrector} blocks, predictor {predictor} + K={k}")]
    DepthMismatch {
        predictor: usize,
        corrector: usize,
        k: usize,
    },

    #[error("predictor-corrector training needs an even epoch count, got {0}")]
    OddEpochCount(usize),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("report lengths differ: {0} vs {1} epochs")]
    LengthMismatch(usize, usize),

    #[error("{path}: size {len} is not a multiple of the {record}-byte record length")]
    BadRecordLength {
        path: String,
        len: usize,
        record: usize,
    },

    #[error("validation fraction {0} must lie strictly between 0 and 1 with both splits nonempty")]
    BadFraction(f64),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(#[from] io::Error),
}
