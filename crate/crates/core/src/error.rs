use std::io;

use thiserror::Error;

/// Errors raised anywhere in the classification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate corpus: {0}")]
    DegenerateCorpus(String),

    #[error("zero vector")]
    ZeroVector,

    #[error("not in vocabulary: {0}")]
    NotInVocabulary(String),

    #[error("sequence shorter than kernel ({len} < {kernel})")]
    SequenceShorterThanKernel { len: usize, kernel: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("forward not cached")]
    ForwardNotCached,

    #[error("token index {index} out of range for vocabulary size {vocab_size}")]
    IndexOutOfRange { index: u32, vocab_size: usize },

    #[error("dataset too small to split ({0} < 10 samples)")]
    DatasetTooSmall(usize),

    #[error("empty split: {0}")]
    EmptySplit(&'static str),

    #[error("ROC undefined: {0}")]
    RocUndefined(&'static str),

    #[error("too many features for exact enumeration ({n} > {max})")]
    TooManyFeatures { n: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
