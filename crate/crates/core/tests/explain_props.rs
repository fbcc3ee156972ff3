use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sidn_core::explain::*;
use sidn_core::model::{Model, ModelConfig, Variant};
use sidn_core::netcore::init::glorot_uniform;
use sidn_core::textprep::{pad_truncate, EncodedSequence};

fn seq(real: &[u32], maxlen: usize) -> EncodedSequence {
    pad_truncate(real, maxlen).unwrap()
}

/// A nonlinear game with pairwise interactions keyed on token identity.
fn interacting(s: &[u32]) -> f64 {
    let present: Vec<f64> = s.iter().filter(|&&v| v != 0).map(|&v| v as f64).collect();
    let lin: f64 = present.iter().map(|v| (v * 0.37).sin()).sum();
    let pair: f64 = present.windows(2).map(|w| (w[0] * 0.11 - w[1] * 0.07).cos()).sum();
    1.0 / (1.0 + (-(0.3 * lin + 0.2 * pair)).exp())
}

fn tiny_model(seed: u64) -> Model {
    let c = ModelConfig {
        variant: Variant::Finetuned,
        vocab_size: 20,
        maxlen: 12,
        emb_dim: 4,
        conv_filters: 3,
        kernel: 3,
        pool: 2,
        lstm_units: 3,
        dense_units: 4,
        dropout: 0.5,
        l2_lambda: 0.01,
        embeddings_trainable: true,
        seed,
    };
    let emb = glorot_uniform(&[21, 4], 2, 2, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut m = Model::build(c, &emb).unwrap();
    // Move the output away from 0.5 so differences are not all tiny.
    m.params.out_b.fill(0.7);
    m
}

fn random_instance(rng: &mut ChaCha8Rng, maxlen: usize, vocab: u32) -> EncodedSequence {
    let n = rng.random_range(1..=10);
    let real: Vec<u32> = (0..n).map(|_| rng.random_range(1..=vocab)).collect();
    seq(&real, maxlen)
}

#[test]
fn full_enumeration_kernel_equals_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = tiny_model(3);
    let stub = FnScorer(interacting);
    for i in 0..50 {
        let s = random_instance(&mut rng, 12, 20);
        let n = s.n_real;
        for scorer in [&stub as &dyn Scorer, &model] {
            let exact = exact_shapley(scorer, &s, 12).unwrap();
            let kernel = kernel_shap(scorer, &s, &[], 1 << n, i).unwrap();
            for (a, b) in exact.phi.iter().zip(&kernel.phi) {
                assert!((a - b).abs() <= 1e-6, "instance {i}: {a} vs {b}");
            }
            assert!(exact.additivity_gap() <= 1e-6);
            assert!(kernel.additivity_gap() <= 1e-6);
        }
    }
}

#[test]
fn linear_game_recovers_weights() {
    let w = [0.5, -1.25, 2.0, 0.0, 3.5, -0.75, 1.0];
    // Position-keyed weights: real position k of a 7-token instance.
    let f = FnScorer(move |s: &[u32]| s[s.len() - 7..].iter().zip(&w).map(|(&v, wi)| if v != 0 { *wi } else { 0.0 }).sum());
    let s = seq(&[3, 1, 4, 1, 5, 9, 2], 10);
    for budget in [1 << 7, 40, 24] {
        let e = kernel_shap(&f, &s, &[], budget, 5).unwrap();
        for (p, wi) in e.phi.iter().zip(&w) {
            assert!((p - wi).abs() <= 1e-9, "budget {budget}: {p} vs {wi}");
        }
    }
    let e = exact_shapley(&f, &s, 12).unwrap();
    for (p, wi) in e.phi.iter().zip(&w) {
        assert!((p - wi).abs() <= 1e-12);
    }
}

#[test]
fn shapley_axioms_on_stub_games() {
    // Tokens 1 and 2 are interchangeable, token 9 is a dummy.
    let f = FnScorer(|s: &[u32]| {
        let has = |t: u32| s.contains(&t) as u8 as f64;
        let a = has(1) + has(2);
        a * a * 0.25 + has(3) * (1.0 + a) - 0.5 * has(3) * has(4)
    });
    let s = seq(&[1, 3, 2, 9, 4], 6);
    let e = exact_shapley(&f, &s, 12).unwrap();
    assert!((e.phi[0] - e.phi[2]).abs() <= 1e-12, "symmetry");
    assert!(e.phi[3].abs() <= 1e-12, "dummy");
    assert!(e.additivity_gap() <= 1e-12, "efficiency");
}

#[test]
fn explanations_are_deterministic_and_leave_the_model_alone() {
    let model = tiny_model(9);
    let before = model.clone();
    let s = seq(&[4, 8, 15, 16, 2, 3, 7, 11, 12, 19, 1, 5], 12);
    let bg = vec![seq(&[1, 2], 12), seq(&[3], 12)];
    let a = kernel_shap(&model, &s, &bg, 300, 42).unwrap();
    let b = kernel_shap(&model, &s, &bg, 300, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(model, before);
    assert!(a.additivity_gap() <= 1e-6);
    let expected_bg = base_value(&model, &bg).unwrap();
    assert_eq!(a.background_value, Some(expected_bg));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampled_kernel_shap_is_additive(
        real in prop::collection::vec(1u32..30, 1..40),
        budget in 2usize..200,
        seed in any::<u64>(),
    ) {
        let s = seq(&real, 40);
        let e = kernel_shap(&FnScorer(interacting), &s, &[], budget, seed).unwrap();
        prop_assert_eq!(e.phi.len(), real.len());
        prop_assert!(e.additivity_gap() <= 1e-6);
    }

    #[test]
    fn force_signs_partition_contributions(real in prop::collection::vec(1u32..30, 1..9), seed in any::<u64>()) {
        let vocab = sidn_core::textprep::Vocabulary::build(&[(1..30).map(|i| format!("w{i}")).collect()], 40);
        let s = seq(&real, 10);
        let e = kernel_shap(&FnScorer(interacting), &s, &[], 64, seed).unwrap();
        let fd = force_data(&e, &vocab);
        prop_assert_eq!(fd.increasing().count() + fd.decreasing().count(), fd.contributions.len());
        prop_assert!(fd.increasing().all(|c| c.phi > 0.0));
        prop_assert!(fd.decreasing().all(|c| c.phi < 0.0));
        for w in fd.contributions.windows(2) {
            prop_assert!(w[0].phi.abs() >= w[1].phi.abs());
        }
        let s = summary_aggregate(&[e.clone(), e], &vocab).unwrap();
        prop_assert_eq!(s.total_count(), 2 * real.len());
    }
}
