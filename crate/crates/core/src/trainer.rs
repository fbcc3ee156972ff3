//! Stratified splitting, Adam, and the epoch loop with early stopping.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::model::{Gradients, Model};
use crate::netcore::{bce_loss, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub patience: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_max: 40,
            batch_size: 512,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            patience: 4,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    /// A learning rate of exactly 0 is accepted so that frozen runs can be
    /// expressed.
    pub fn validate(&self) -> Result<()> {
        if self.epochs_max == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(invalid("train: epochs_max, batch_size and patience must be >= 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(invalid("train: lr must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(invalid("train: betas must lie in [0, 1) and adam_eps must be positive"));
        }
        Ok(())
    }
}

/// Padded index sequences with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Examples {
    pub sequences: Vec<Vec<u32>>,
    pub labels: Vec<u8>,
}

impl Examples {
    pub fn new(sequences: Vec<Vec<u32>>, labels: Vec<u8>) -> Result<Self> {
        if sequences.len() != labels.len() {
            return Err(shape(format!("{} sequences, {} labels", sequences.len(), labels.len())));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(invalid("labels must be 0 or 1"));
        }
        Ok(Self { sequences, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn gather(&self, indices: &[usize]) -> (Vec<&[u32]>, Vec<f64>) {
        indices
            .iter()
            .map(|&i| (self.sequences[i].as_slice(), self.labels[i] as f64))
            .unzip()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub const MIN_SPLIT_SIZE: usize = 10;

const SHARES: [f64; 3] = [0.8, 0.1, 0.1];

/// Stratified 80/10/10 split. Each class is shuffled and cut into per-split
/// counts that are its quotas rounded up or down; among those roundings the
/// one whose split totals stay closest to 80/10/10 of the whole is chosen.
pub fn split(labels: &[u8], seed: u64) -> Result<SplitIndices> {
    let n = labels.len();
    if n < MIN_SPLIT_SIZE {
        return Err(Error::DatasetTooSmall(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<u8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let members: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| {
            let mut m: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            m.shuffle(&mut rng);
            m
        })
        .collect();
    let counts = rounded_counts(&members.iter().map(Vec::len).collect::<Vec<_>>(), n);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (m, k) in members.iter().zip(&counts) {
        let mut start = 0;
        for (part, &len) in parts.iter_mut().zip(k) {
            part.extend_from_slice(&m[start..start + len]);
            start += len;
        }
    }
    let [mut train, mut val, mut test] = parts;
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, val, test })
}

/// Per-class split sizes: every entry is floor or ceil of its quota, and the
/// choice minimizes the worst deviation of the split totals. Searched
/// exhaustively, which is cheap for the handful of classes a label set has.
fn rounded_counts(class_sizes: &[usize], n: usize) -> Vec<[usize; 3]> {
    let options: Vec<Vec<[usize; 3]>> = class_sizes
        .iter()
        .map(|&nc| {
            let q = SHARES.map(|s| s * nc as f64);
            let lo = q.map(|x| x.floor() as usize);
            let mut out = Vec::new();
            for mask in 0u8..8 {
                let k: [usize; 3] = std::array::from_fn(|j| lo[j] + ((mask >> j) & 1) as usize);
                let feasible = (0..3).all(|j| (k[j] as f64 - q[j]).abs() < 1.0);
                if feasible && k.iter().sum::<usize>() == nc && !out.contains(&k) {
                    out.push(k);
                }
            }
            out
        })
        .collect();
    let score = |choice: &[usize]| -> f64 {
        (0..3)
            .map(|j| {
                let total: usize = choice.iter().zip(&options).map(|(&o, opts)| opts[o][j]).sum();
                (total as f64 - SHARES[j] * n as f64).abs()
            })
            .fold(0.0, f64::max)
    };
    let mut choice = vec![0; options.len()];
    let mut best = (score(&choice), choice.clone());
    'search: loop {
        for c in 0..choice.len() {
            choice[c] += 1;
            if choice[c] < options[c].len() {
                let s = score(&choice);
                if s < best.0 {
                    best = (s, choice.clone());
                }
                continue 'search;
            }
            choice[c] = 0;
        }
        break;
    }
    best.1.iter().zip(&options).map(|(&o, opts)| opts[o]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(shapes: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = shapes.into_iter().map(Tensor::zeros_like).collect();
        Self { v: m.clone(), m, t: 0 }
    }

    pub fn for_model(model: &Model) -> Self {
        Self::new(model.params.trainable(model.config.embeddings_trainable).into_iter().map(|(_, t)| t))
    }
}

/// One bias-corrected Adam step over paired parameter and gradient lists.
pub fn adam_update(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(shape(format!(
            "adam: {} params, {} grads, {} moment tensors",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if !p.same_shape(g) || !p.same_shape(m) {
            return Err(shape(format!("adam: param {:?}, grad {:?}", p.shape(), g.shape())));
        }
    }
    state.t += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

fn adam_step(model: &mut Model, grads: &Gradients, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    let trainable = model.config.embeddings_trainable;
    let g: Vec<&Tensor> = grads.trainable(trainable).into_iter().map(|(_, t)| t).collect();
    let mut p: Vec<&mut Tensor> = model.params.trainable_mut(trainable).into_iter().map(|(_, t)| t).collect();
    adam_update(&mut p, &g, state, cfg)
}

/// Mean BCE and threshold-0.5 accuracy of inference-mode predictions.
pub fn evaluate_epoch(model: &Model, indices: &[usize], data: &Examples) -> Result<(f64, f64)> {
    if indices.is_empty() {
        return Err(Error::EmptySplit("evaluation"));
    }
    let (seqs, labels) = data.gather(indices);
    let probs = model.predict_batch(&seqs)?;
    Ok((bce_loss(&probs, &labels), accuracy(&probs, &labels)))
}

fn accuracy(probs: &[f64], labels: &[f64]) -> f64 {
    let correct = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= 0.5) == (y == 1.0))
        .count();
    correct as f64 / probs.len() as f64
}

/// Consecutive batches of `size`; the last one may be shorter.
pub fn batches(order: &[usize], size: usize) -> std::slice::Chunks<'_, usize> {
    order.chunks(size)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
    /// 1-based epoch whose weights were restored.
    pub best_epoch: usize,
    /// Last epoch that ran.
    pub stopped_epoch: usize,
    pub early_stopped: bool,
}

impl TrainingHistory {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.records.iter().map(|r| r.val_loss).reduce(f64::min)
    }

    /// CSV `epoch,train_loss,train_acc,val_loss,val_acc`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.train_acc.to_string(),
                r.val_loss.to_string(),
                r.val_acc.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Source of the monitored validation loss and accuracy.
pub trait Validator {
    fn validate(&mut self, model: &Model) -> Result<(f64, f64)>;
}

/// Inference-mode evaluation on a held-out index set.
pub struct SplitValidator<'a> {
    pub data: &'a Examples,
    pub indices: &'a [usize],
}

impl Validator for SplitValidator<'_> {
    fn validate(&mut self, model: &Model) -> Result<(f64, f64)> {
        evaluate_epoch(model, self.indices, self.data)
    }
}

/// Owns the optimizer state and the random stream used for shuffling and
/// dropout, so epochs can be driven one at a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    adam: AdamState,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: &Model, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            adam: AdamState::for_model(model),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    /// One pass over `train`. Returns the sample-weighted mean training-mode
    /// BCE and accuracy of the batches as they were seen.
    pub fn train_epoch(&mut self, model: &mut Model, data: &Examples, train: &[usize]) -> Result<(f64, f64)> {
        if train.is_empty() {
            return Err(Error::EmptySplit("train"));
        }
        let mut order = train.to_vec();
        if self.cfg.shuffle {
            order.shuffle(&mut self.rng);
        }
        let (mut loss_sum, mut correct) = (0.0, 0.0);
        for batch in batches(&order, self.cfg.batch_size) {
            let (seqs, labels) = data.gather(batch);
            let r = model.loss_and_grads(&seqs, &labels, &mut self.rng)?;
            loss_sum += r.bce * batch.len() as f64;
            correct += accuracy(&r.probs, &labels) * batch.len() as f64;
            adam_step(model, &r.grads, &mut self.adam, &self.cfg)?;
            if let (Some(bn), Some(stats)) = (model.params.batchnorm.as_mut(), r.batch_stats.as_ref()) {
                bn.update_running(stats);
            }
        }
        let n = order.len() as f64;
        Ok((loss_sum / n, correct / n))
    }
}

/// Train with early stopping on the validator's loss (strict improvement),
/// then restore the best snapshot. `on_epoch` sees every record as it is
/// produced.
pub fn fit_with(
    mut model: Model,
    data: &Examples,
    train: &[usize],
    cfg: &TrainConfig,
    validator: &mut dyn Validator,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(Model, TrainingHistory)> {
    let mut trainer = Trainer::new(&model, cfg.clone())?;
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, crate::model::Params)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.epochs_max {
        let (train_loss, train_acc) = trainer.train_epoch(&mut model, data, train)?;
        let (val_loss, val_acc) = validator.validate(&model)?;
        let record = EpochRecord { epoch, train_loss, train_acc, val_loss, val_acc };
        on_epoch(&record);
        history.records.push(record);
        history.stopped_epoch = epoch;
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.params.clone()));
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                history.early_stopped = epoch < cfg.epochs_max;
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, history))
}

/// [`fit_with`] validating on `splits.val`.
pub fn fit(model: Model, data: &Examples, splits: &SplitIndices, cfg: &TrainConfig) -> Result<(Model, TrainingHistory)> {
    if splits.val.is_empty() {
        return Err(Error::EmptySplit("val"));
    }
    let mut validator = SplitValidator { data, indices: &splits.val };
    fit_with(model, data, &splits.train, cfg, &mut validator, &mut |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_determinism() {
        let labels: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let s = split(&labels, 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
        assert_eq!(s, split(&labels, 3).unwrap());
        assert_ne!(s, split(&labels, 4).unwrap());
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(matches!(split(&labels[..9], 0), Err(Error::DatasetTooSmall(9))));
    }

    #[test]
    fn partial_batch_is_kept() {
        let order: Vec<usize> = (0..9).collect();
        assert_eq!(batches(&order, 4).map(|x| x.len()).collect::<Vec<_>>(), [4, 4, 1]);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = Tensor::vector(vec![0.3, -1.2]);
        let g = Tensor::zeros(&[2]);
        let mut st = AdamState::new([&p]);
        adam_update(&mut [&mut p], &[&g], &mut st, &TrainConfig::default()).unwrap();
        assert_eq!(p.data(), &[0.3, -1.2]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let cfg = TrainConfig { lr: 1e-3, ..Default::default() };
        let mut p = Tensor::vector(vec![0.0, 1.0, 2.0]);
        let g = Tensor::vector(vec![0.5, -3.0, 1e-3]);
        let mut st = AdamState::new([&p]);
        adam_update(&mut [&mut p], &[&g], &mut st, &cfg).unwrap();
        for (after, (before, gi)) in p.data().iter().zip([0.0, 1.0, 2.0].iter().zip(g.data())) {
            let d = after - before;
            assert!((d + cfg.lr * gi.signum()).abs() < 1e-6, "{d}");
        }
    }

    #[test]
    fn adam_rejects_mismatched_shapes() {
        let mut p = Tensor::zeros(&[2]);
        let g = Tensor::zeros(&[3]);
        let mut st = AdamState::new([&p]);
        assert!(adam_update(&mut [&mut p], &[&g], &mut st, &TrainConfig::default()).is_err());
    }

    #[test]
    fn history_csv_header() {
        let h = TrainingHistory {
            records: vec![EpochRecord { epoch: 1, train_loss: 0.5, train_acc: 0.75, val_loss: 0.25, val_acc: 1.0 }],
            best_epoch: 1,
            stopped_epoch: 1,
            early_stopped: false,
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,train_loss,train_acc,val_loss,val_acc\n1,0.5,0.75,0.25,1\n");
    }
}
