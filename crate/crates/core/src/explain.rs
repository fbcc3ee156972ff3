//! Shapley attributions over token positions.
//!
//! One feature per non-padding position. A masked position holds the padding
//! index, whose embedding row is pinned at zero.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::model::Model;
use crate::textprep::{EncodedSequence, Vocabulary, PAD};

pub const DEFAULT_MAX_EXACT: usize = 12;
/// Hard ceiling for exact enumeration regardless of the caller's limit.
const EXACT_CEILING: usize = 24;

/// Anything that maps a batch of index sequences to probabilities.
pub trait Scorer {
    fn score(&self, batch: &[Vec<u32>]) -> Result<Vec<f64>>;
}

impl Scorer for Model {
    fn score(&self, batch: &[Vec<u32>]) -> Result<Vec<f64>> {
        self.predict_batch(batch)
    }
}

/// Scores each sequence independently with a closure.
pub struct FnScorer<F>(pub F);

impl<F: Fn(&[u32]) -> f64> Scorer for FnScorer<F> {
    fn score(&self, batch: &[Vec<u32>]) -> Result<Vec<f64>> {
        Ok(batch.iter().map(|s| (self.0)(s)).collect())
    }
}

/// `true` keeps the token at that real position.
pub type FeatureMask = Vec<bool>;

pub fn mask_instance(seq: &EncodedSequence, mask: &[bool]) -> Result<EncodedSequence> {
    if mask.len() != seq.n_real {
        return Err(shape(format!("mask of {} for {} real tokens", mask.len(), seq.n_real)));
    }
    let mut out = seq.clone();
    let start = seq.first_real();
    for (slot, &keep) in out.indices[start..].iter_mut().zip(mask) {
        if !keep {
            *slot = PAD;
        }
    }
    Ok(out)
}

/// Mean prediction over a background set.
pub fn base_value(scorer: &dyn Scorer, background: &[EncodedSequence]) -> Result<f64> {
    if background.is_empty() {
        return Err(invalid("empty background set"));
    }
    let batch: Vec<Vec<u32>> = background.iter().map(|s| s.indices.clone()).collect();
    let p = scorer.score(&batch)?;
    Ok(p.iter().sum::<f64>() / p.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapExplanation {
    /// Prediction with every real token masked.
    pub base_value: f64,
    /// One value per real position, in sequence order.
    pub phi: Vec<f64>,
    pub prediction: f64,
    pub instance: EncodedSequence,
    /// Mean prediction over a background set, when one was supplied.
    pub background_value: Option<f64>,
}

impl ShapExplanation {
    pub fn additivity_gap(&self) -> f64 {
        (self.base_value + self.phi.iter().sum::<f64>() - self.prediction).abs()
    }
}

fn evaluate_masks(scorer: &dyn Scorer, seq: &EncodedSequence, masks: &[FeatureMask]) -> Result<Vec<f64>> {
    let batch = masks
        .iter()
        .map(|m| mask_instance(seq, m).map(|s| s.indices))
        .collect::<Result<Vec<_>>>()?;
    let out = scorer.score(&batch)?;
    if out.len() != masks.len() {
        return Err(shape(format!("scorer returned {} values for {} inputs", out.len(), masks.len())));
    }
    Ok(out)
}

fn bits_to_mask(bits: u64, n: usize) -> FeatureMask {
    (0..n).map(|i| bits >> i & 1 == 1).collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley values by enumerating all 2^n coalitions. The base is the value
/// of the empty coalition.
pub fn exact_shapley(scorer: &dyn Scorer, seq: &EncodedSequence, max_features: usize) -> Result<ShapExplanation> {
    let n = seq.n_real;
    let max = max_features.min(EXACT_CEILING);
    if n > max {
        return Err(Error::TooManyFeatures { n, max });
    }
    let masks: Vec<FeatureMask> = (0..1u64 << n).map(|b| bits_to_mask(b, n)).collect();
    let f = evaluate_masks(scorer, seq, &masks)?;
    // Weight of a coalition of size s that excludes the player: s!(n-s-1)!/n!.
    let weight: Vec<f64> = (0..n).map(|s| 1.0 / (n as f64 * binomial(n - 1, s))).collect();
    let mut phi = vec![0.0; n];
    for (bits, &v) in f.iter().enumerate() {
        let size = (bits as u64).count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if bits >> i & 1 == 0 {
                *p += weight[size] * (f[bits | 1 << i] - v);
            }
        }
    }
    Ok(ShapExplanation {
        base_value: f[0],
        phi,
        prediction: f[(1usize << n) - 1],
        instance: seq.clone(),
        background_value: None,
    })
}

fn combinations(m: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + m - k) else { return };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn mask_of(m: usize, members: impl IntoIterator<Item = usize>) -> FeatureMask {
    let mut mask = vec![false; m];
    for i in members {
        mask[i] = true;
    }
    mask
}

/// Interior coalitions (neither empty nor full) with their kernel weights,
/// using at most `budget` of them. Sizes are taken from the outside in, a
/// size and its complement together; a size is enumerated completely while
/// its share of the remaining kernel mass covers all its coalitions, and the
/// rest of the budget is sampled by size with the leftover mass spread over
/// the draws.
fn coalition_plan(m: usize, budget: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(FeatureMask, f64)>> {
    if m < 2 {
        return Ok(Vec::new());
    }
    let n_sizes = m / 2;
    let n_paired = (m - 1) / 2;
    let kernel = |s: usize| (m - 1) as f64 / (s * (m - s)) as f64;
    let paired = |s: usize| s <= n_paired;
    let mass: Vec<f64> = (1..=n_sizes).map(|s| kernel(s) * if paired(s) { 2.0 } else { 1.0 }).collect();

    let mut plan = Vec::new();
    let mut left = budget as f64;
    let mut done = 0;
    for s in 1..=n_sizes {
        let count = binomial(m, s) * if paired(s) { 2.0 } else { 1.0 };
        let share: f64 = mass[s - 1] / mass[s - 1..].iter().sum::<f64>();
        if left * share < count - 1e-8 {
            break;
        }
        let w = kernel(s) / binomial(m, s);
        combinations(m, s, |idx| {
            let mask = mask_of(m, idx.iter().copied());
            if paired(s) {
                plan.push((mask.iter().map(|b| !b).collect(), w));
            }
            plan.push((mask, w));
        });
        left -= count;
        done = s;
    }
    let draws = left.max(0.0) as usize;
    if done == n_sizes || draws == 0 {
        return Ok(plan);
    }

    let sizes: Vec<usize> = (done + 1..=n_sizes).collect();
    let pick = WeightedIndex::new(&mass[done..]).map_err(|e| invalid(e.to_string()))?;
    let mut order: Vec<FeatureMask> = Vec::new();
    let mut hits: HashMap<FeatureMask, f64> = HashMap::new();
    let mut record = |mask: FeatureMask| {
        let h = hits.entry(mask.clone()).or_insert(0.0);
        if *h == 0.0 {
            order.push(mask);
        }
        *h += 1.0;
    };
    let mut taken = 0;
    while taken < draws {
        let s = sizes[pick.sample(rng)];
        let mask = mask_of(m, rand::seq::index::sample(rng, m, s));
        if paired(s) && taken + 1 < draws {
            record(mask.iter().map(|b| !b).collect());
            taken += 1;
        }
        record(mask);
        taken += 1;
    }
    let leftover: f64 = mass[done..].iter().sum();
    plan.extend(order.into_iter().map(|mask| {
        let w = leftover * hits[&mask] / taken as f64;
        (mask, w)
    }));
    Ok(plan)
}

/// KernelSHAP. `n_coalitions` counts the two pinned endpoint coalitions;
/// with at least 2^n of them every coalition is enumerated and the result
/// is the exact Shapley vector. The efficiency constraint is imposed by
/// eliminating the last feature, so additivity holds for any sample.
pub fn kernel_shap(
    scorer: &dyn Scorer,
    seq: &EncodedSequence,
    background: &[EncodedSequence],
    n_coalitions: usize,
    seed: u64,
) -> Result<ShapExplanation> {
    if n_coalitions < 2 {
        return Err(invalid("kernel_shap needs at least 2 coalitions"));
    }
    let m = seq.n_real;
    let background_value = if background.is_empty() { None } else { Some(base_value(scorer, background)?) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = coalition_plan(m, n_coalitions - 2, &mut rng)?;

    let mut masks = vec![vec![false; m], vec![true; m]];
    masks.extend(plan.iter().map(|(mask, _)| mask.clone()));
    let f = evaluate_masks(scorer, seq, &masks)?;
    let (f0, f1) = (f[0], f[1]);
    let delta = f1 - f0;

    let phi = match m {
        0 => Vec::new(),
        1 => vec![delta],
        _ if plan.is_empty() => vec![delta / m as f64; m],
        _ => {
            let last = m - 1;
            let x = DMatrix::from_fn(plan.len(), last, |r, j| {
                let z = &plan[r].0;
                plan[r].1.sqrt() * (z[j] as u8 as f64 - z[last] as u8 as f64)
            });
            let y = DVector::from_fn(plan.len(), |r, _| {
                let (z, w) = &plan[r];
                w.sqrt() * (f[r + 2] - f0 - z[last] as u8 as f64 * delta)
            });
            let beta = x.svd(true, true).solve(&y, 1e-12).map_err(|e| invalid(e.to_string()))?;
            let mut phi: Vec<f64> = beta.iter().copied().collect();
            phi.push(delta - phi.iter().sum::<f64>());
            phi
        }
    };
    Ok(ShapExplanation { base_value: f0, phi, prediction: f1, instance: seq.clone(), background_value })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Pushes the prediction toward the positive class.
    Increase,
    Decrease,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    /// Position among the real tokens, 0-based.
    pub position: usize,
    pub index: u32,
    pub word: String,
    pub phi: f64,
    pub direction: Direction,
}

/// Everything a force plot needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceData {
    pub base_value: f64,
    pub prediction: f64,
    /// Base is the empty-coalition prediction; this is the background mean.
    pub background_value: Option<f64>,
    /// Nonzero contributions by decreasing |phi|.
    pub contributions: Vec<Contribution>,
    /// Every real position in sequence order.
    pub tokens: Vec<Contribution>,
}

impl ForceData {
    pub fn increasing(&self) -> impl Iterator<Item = &Contribution> {
        self.contributions.iter().filter(|c| c.direction == Direction::Increase)
    }

    pub fn decreasing(&self) -> impl Iterator<Item = &Contribution> {
        self.contributions.iter().filter(|c| c.direction == Direction::Decrease)
    }
}

fn word_of(vocab: &Vocabulary, index: u32) -> String {
    vocab.word(index).map_or_else(|| format!("<{index}>"), str::to_string)
}

pub fn force_data(e: &ShapExplanation, vocab: &Vocabulary) -> ForceData {
    let tokens: Vec<Contribution> = e
        .instance
        .real()
        .iter()
        .zip(&e.phi)
        .enumerate()
        .map(|(position, (&index, &phi))| Contribution {
            position,
            index,
            word: word_of(vocab, index),
            phi,
            direction: if phi >= 0.0 { Direction::Increase } else { Direction::Decrease },
        })
        .collect();
    let mut contributions: Vec<Contribution> = tokens.iter().filter(|c| c.phi != 0.0).cloned().collect();
    contributions.sort_by(|a, b| b.phi.abs().total_cmp(&a.phi.abs()).then(a.position.cmp(&b.position)));
    ForceData {
        base_value: e.base_value,
        prediction: e.prediction,
        background_value: e.background_value,
        contributions,
        tokens,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub word: String,
    pub index: u32,
    pub mean_phi: f64,
    pub mean_abs_phi: f64,
    pub count: usize,
    /// Every attributed phi, in the order the explanations were given.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSummary {
    /// Ranked by mean |phi|, largest first; ties by word.
    pub entries: Vec<SummaryEntry>,
}

impl GlobalSummary {
    pub fn total_count(&self) -> usize {
        self.entries.iter().map(|e| e.count).sum()
    }

    /// CSV `word,mean_phi,mean_abs_phi,count`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["word", "mean_phi", "mean_abs_phi", "count"])?;
        for e in &self.entries {
            w.write_record([e.word.clone(), e.mean_phi.to_string(), e.mean_abs_phi.to_string(), e.count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pools phi by vocabulary word across explanations; repeated tokens inside
/// one instance each count once.
pub fn summary_aggregate(explanations: &[ShapExplanation], vocab: &Vocabulary) -> Result<GlobalSummary> {
    if explanations.is_empty() {
        return Err(invalid("no explanations to aggregate"));
    }
    let mut by_index: HashMap<u32, Vec<f64>> = HashMap::new();
    for e in explanations {
        if e.phi.len() != e.instance.n_real {
            return Err(shape(format!("{} phi values for {} real tokens", e.phi.len(), e.instance.n_real)));
        }
        for (&index, &phi) in e.instance.real().iter().zip(&e.phi) {
            by_index.entry(index).or_default().push(phi);
        }
    }
    let mut entries: Vec<SummaryEntry> = by_index
        .into_iter()
        .map(|(index, values)| {
            let n = values.len() as f64;
            SummaryEntry {
                word: word_of(vocab, index),
                index,
                mean_phi: values.iter().sum::<f64>() / n,
                mean_abs_phi: values.iter().map(|v| v.abs()).sum::<f64>() / n,
                count: values.len(),
                values,
            }
        })
        .collect();
    entries.sort_by(|a, b| b.mean_abs_phi.total_cmp(&a.mean_abs_phi).then_with(|| a.word.cmp(&b.word)));
    Ok(GlobalSummary { entries })
}
