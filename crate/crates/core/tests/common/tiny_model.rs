//! A small model configuration used by gradient and property checks.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sidn_core::model::*;
use sidn_core::netcore::init::glorot_uniform;

pub fn tiny(variant: Variant, seed: u64) -> ModelConfig {
    ModelConfig {
        variant,
        vocab_size: 10,
        maxlen: 8,
        emb_dim: 5,
        conv_filters: 4,
        kernel: 3,
        pool: 2,
        lstm_units: 3,
        dense_units: 4,
        dropout: 0.0,
        l2_lambda: if variant == Variant::Finetuned { 0.01 } else { 0.0 },
        embeddings_trainable: true,
        seed,
    }
}

pub fn build(c: &ModelConfig, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe3b);
    let emb = glorot_uniform(&[c.vocab_size + 1, c.emb_dim], 2, 2, &mut rng);
    Model::build(c.clone(), &emb).unwrap()
}

pub fn random_batch(c: &ModelConfig, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<u32>> {
    (0..n)
        .map(|_| {
            let pad = rng.random_range(0..c.maxlen / 2);
            (0..c.maxlen)
                .map(|t| if t < pad { 0 } else { rng.random_range(1..=c.vocab_size as u32) })
                .collect()
        })
        .collect()
}
