//! Run configuration: one JSON document covering every stage.

use std::path::Path;

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sidn_core::corpus::SyntheticSpec;
use sidn_core::model::{ModelConfig, Variant};
use sidn_core::trainer::TrainConfig;
use sidn_core::word2vec::W2VConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepConfig {
    pub vocab_size: usize,
    pub maxlen: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self { vocab_size: 2000, maxlen: 100 }
    }
}

/// Architecture knobs. Vocabulary size, sequence length and embedding width
/// come from the earlier stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub variant: Variant,
    pub conv_filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub lstm_units: usize,
    pub dense_units: usize,
    pub dropout: f64,
    /// Defaults to 0.01 for the fine-tuned variant and 0 for the baseline.
    pub l2_lambda: Option<f64>,
    pub embeddings_trainable: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = ModelConfig::finetuned(1);
        Self {
            variant: Variant::Finetuned,
            conv_filters: c.conv_filters,
            kernel: c.kernel,
            pool: c.pool,
            lstm_units: c.lstm_units,
            dense_units: c.dense_units,
            dropout: c.dropout,
            l2_lambda: None,
            embeddings_trainable: true,
        }
    }
}

impl ModelSection {
    pub fn to_model_config(&self, vocab_size: usize, maxlen: usize, emb_dim: usize, seed: u64) -> ModelConfig {
        let base = match self.variant {
            Variant::Baseline => ModelConfig::baseline(vocab_size),
            Variant::Finetuned => ModelConfig::finetuned(vocab_size),
        };
        ModelConfig {
            variant: self.variant,
            vocab_size,
            maxlen,
            emb_dim,
            conv_filters: self.conv_filters,
            kernel: self.kernel,
            pool: self.pool,
            lstm_units: self.lstm_units,
            dense_units: self.dense_units,
            dropout: self.dropout,
            l2_lambda: self.l2_lambda.unwrap_or(base.l2_lambda),
            embeddings_trainable: self.embeddings_trainable,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainConfig {
    pub n_coalitions: usize,
    pub max_exact: usize,
    /// Test-split documents explained in summary mode.
    pub instances: usize,
    /// Training documents averaged for the background value.
    pub background: usize,
    pub top_k: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { n_coalitions: 512, max_exact: 12, instances: 20, background: 20, top_k: 20 }
    }
}

/// Stage seeds are overwritten by the top-level seed once it is resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub synthetic: SyntheticSpec,
    pub prep: PrepConfig,
    pub word2vec: W2VConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub explain: ExplainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Pins every stage seed to `seed` and checks the stage configs.
    pub fn resolve(mut self, seed: u64) -> Result<Self> {
        self.seed = Some(seed);
        self.synthetic.seed = seed;
        self.word2vec.seed = seed;
        self.train.seed = seed;
        self.synthetic.validate()?;
        self.word2vec.validate()?;
        self.train.validate()?;
        ensure!(self.prep.vocab_size >= 1 && self.prep.maxlen >= 1, "prep: vocab_size and maxlen must be >= 1");
        ensure!(self.explain.n_coalitions >= 2, "explain: n_coalitions must be >= 2");
        Ok(self)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
