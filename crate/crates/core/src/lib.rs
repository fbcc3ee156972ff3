//! Suicidal-ideation text classification from first principles.
//!
//! The crate covers the whole pipeline: text preprocessing ([`textprep`]),
//! CBOW word embeddings ([`word2vec`]), numerical kernels with hand-written
//! backward passes ([`netcore`]), the CNN-BiLSTM-attention classifier
//! ([`model`]), Adam training with early stopping ([`trainer`]), evaluation
//! ([`metrics`]) and Shapley-value explanations ([`explain`]).

pub mod corpus;
pub mod dataset;
pub mod error;
pub mod explain;
pub mod metrics;
pub mod model;
pub mod netcore;
pub mod textprep;
pub mod trainer;
pub mod word2vec;

pub use error::{Error, Result};
