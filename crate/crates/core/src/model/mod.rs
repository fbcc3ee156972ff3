//! The CNN-BiLSTM-attention classifier.
//!
//! Per-sample trunk: embedding → conv1d (relu) → maxpool → BiLSTM →
//! additive attention. Batch head: [batchnorm] → flatten → dense (relu) →
//! dropout → dense (1) → sigmoid. The fine-tuned variant adds the
//! batchnorm layer and an L2 penalty on the weight matrices.

mod weights;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::netcore::init::glorot_uniform;
use crate::netcore::*;
use crate::textprep::EncodedSequence;

/// Probabilities are kept this far from 0 and 1.
pub const PROB_FLOOR: f64 = 1e-15;
/// Samples per chunk in batched inference.
const INFER_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Baseline,
    Finetuned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub vocab_size: usize,
    pub maxlen: usize,
    pub emb_dim: usize,
    pub conv_filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub lstm_units: usize,
    pub dense_units: usize,
    pub dropout: f64,
    pub l2_lambda: f64,
    pub embeddings_trainable: bool,
    pub seed: u64,
}

impl ModelConfig {
    pub fn baseline(vocab_size: usize) -> Self {
        Self {
            variant: Variant::Baseline,
            vocab_size,
            maxlen: 100,
            emb_dim: 100,
            conv_filters: 128,
            kernel: 5,
            pool: 2,
            lstm_units: 64,
            dense_units: 64,
            dropout: 0.5,
            l2_lambda: 0.0,
            embeddings_trainable: true,
            seed: 0,
        }
    }

    pub fn finetuned(vocab_size: usize) -> Self {
        Self {
            variant: Variant::Finetuned,
            l2_lambda: 0.01,
            ..Self::baseline(vocab_size)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.maxlen,
            self.emb_dim,
            self.conv_filters,
            self.kernel,
            self.pool,
            self.lstm_units,
            self.dense_units,
        ];
        if sizes.contains(&0) {
            return Err(invalid("model: all layer sizes must be positive"));
        }
        if self.maxlen < self.kernel || self.conv_len() < self.pool {
            return Err(invalid(format!(
                "model: maxlen {} too short for kernel {} and pool {}",
                self.maxlen, self.kernel, self.pool
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid("model: dropout must lie in [0, 1)"));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(invalid("model: l2_lambda must be >= 0"));
        }
        Ok(())
    }

    pub fn conv_len(&self) -> usize {
        self.maxlen + 1 - self.kernel
    }

    /// Timesteps after pooling.
    pub fn pooled_len(&self) -> usize {
        self.conv_len() / self.pool
    }

    /// Width of the BiLSTM and attention outputs.
    pub fn feature_dim(&self) -> usize {
        2 * self.lstm_units
    }

    pub fn flat_dim(&self) -> usize {
        self.pooled_len() * self.feature_dim()
    }

    pub fn has_batchnorm(&self) -> bool {
        self.variant == Variant::Finetuned
    }
}

/// Every tensor of the network. Gradients use the same type; their running
/// batchnorm statistics are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub embedding: Tensor,
    pub conv_kernel: Tensor,
    pub conv_bias: Tensor,
    pub lstm_fwd: LstmParams,
    pub lstm_bwd: LstmParams,
    pub attention: AttentionParams,
    pub batchnorm: Option<BatchNormState>,
    pub dense_w: Tensor,
    pub dense_b: Tensor,
    pub out_w: Tensor,
    pub out_b: Tensor,
}

/// Names of the tensors carrying the L2 penalty.
pub const REGULARIZED: [&str; 7] = [
    "conv.kernel",
    "lstm_fwd.w",
    "lstm_fwd.u",
    "lstm_bwd.w",
    "lstm_bwd.u",
    "dense.w",
    "output.w",
];

impl Params {
    /// All-zero tensors shaped for `c`, including the batchnorm scale and
    /// running variance, so the result can serve as a gradient accumulator.
    pub fn zeros(c: &ModelConfig) -> Self {
        let f = c.feature_dim();
        Self {
            embedding: Tensor::zeros(&[c.vocab_size + 1, c.emb_dim]),
            conv_kernel: Tensor::zeros(&[c.kernel, c.emb_dim, c.conv_filters]),
            conv_bias: Tensor::zeros(&[c.conv_filters]),
            lstm_fwd: LstmParams::zeros(c.conv_filters, c.lstm_units),
            lstm_bwd: LstmParams::zeros(c.conv_filters, c.lstm_units),
            attention: AttentionParams::zeros(f),
            batchnorm: c.has_batchnorm().then(|| {
                let mut bn = BatchNormState::new(f);
                bn.gamma.fill(0.0);
                bn.running_var.fill(0.0);
                bn
            }),
            dense_w: Tensor::zeros(&[c.flat_dim(), c.dense_units]),
            dense_b: Tensor::zeros(&[c.dense_units]),
            out_w: Tensor::zeros(&[c.dense_units, 1]),
            out_b: Tensor::zeros(&[1]),
        }
    }

    /// Every tensor with its name, including batchnorm running statistics.
    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        let mut v = vec![
            ("embedding", &self.embedding),
            ("conv.kernel", &self.conv_kernel),
            ("conv.bias", &self.conv_bias),
            ("lstm_fwd.w", &self.lstm_fwd.w),
            ("lstm_fwd.u", &self.lstm_fwd.u),
            ("lstm_fwd.b", &self.lstm_fwd.b),
            ("lstm_bwd.w", &self.lstm_bwd.w),
            ("lstm_bwd.u", &self.lstm_bwd.u),
            ("lstm_bwd.b", &self.lstm_bwd.b),
            ("attention.w", &self.attention.w),
            ("attention.b", &self.attention.b),
            ("attention.v", &self.attention.v),
        ];
        if let Some(bn) = &self.batchnorm {
            v.extend([
                ("batchnorm.gamma", &bn.gamma),
                ("batchnorm.beta", &bn.beta),
                ("batchnorm.running_mean", &bn.running_mean),
                ("batchnorm.running_var", &bn.running_var),
            ]);
        }
        v.extend([
            ("dense.w", &self.dense_w),
            ("dense.b", &self.dense_b),
            ("output.w", &self.out_w),
            ("output.b", &self.out_b),
        ]);
        v
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut v = vec![
            ("embedding", &mut self.embedding),
            ("conv.kernel", &mut self.conv_kernel),
            ("conv.bias", &mut self.conv_bias),
            ("lstm_fwd.w", &mut self.lstm_fwd.w),
            ("lstm_fwd.u", &mut self.lstm_fwd.u),
            ("lstm_fwd.b", &mut self.lstm_fwd.b),
            ("lstm_bwd.w", &mut self.lstm_bwd.w),
            ("lstm_bwd.u", &mut self.lstm_bwd.u),
            ("lstm_bwd.b", &mut self.lstm_bwd.b),
            ("attention.w", &mut self.attention.w),
            ("attention.b", &mut self.attention.b),
            ("attention.v", &mut self.attention.v),
        ];
        if let Some(bn) = &mut self.batchnorm {
            v.extend([
                ("batchnorm.gamma", &mut bn.gamma),
                ("batchnorm.beta", &mut bn.beta),
                ("batchnorm.running_mean", &mut bn.running_mean),
                ("batchnorm.running_var", &mut bn.running_var),
            ]);
        }
        v.extend([
            ("dense.w", &mut self.dense_w),
            ("dense.b", &mut self.dense_b),
            ("output.w", &mut self.out_w),
            ("output.b", &mut self.out_b),
        ]);
        v
    }

    /// Tensors updated by the optimizer: everything except the running
    /// statistics, and the embedding only when it is trainable.
    pub fn trainable(&self, embeddings_trainable: bool) -> Vec<(&'static str, &Tensor)> {
        self.named()
            .into_iter()
            .filter(|(n, _)| is_trainable(n, embeddings_trainable))
            .collect()
    }

    pub fn trainable_mut(&mut self, embeddings_trainable: bool) -> Vec<(&'static str, &mut Tensor)> {
        self.named_mut()
            .into_iter()
            .filter(|(n, _)| is_trainable(n, embeddings_trainable))
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.all_finite())
    }
}

fn is_trainable(name: &str, embeddings_trainable: bool) -> bool {
    !name.starts_with("batchnorm.running") && (embeddings_trainable || name != "embedding")
}

pub type Gradients = Params;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
}

#[derive(Debug, Clone)]
struct SampleCache {
    conv: Conv1dCache,
    pool: MaxPoolCache,
    bilstm: BiLstmCache,
    attention: AttentionCache,
}

/// Everything the backward pass needs from a training-mode forward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    tokens: Vec<Vec<u32>>,
    samples: Vec<SampleCache>,
    batchnorm: Option<BatchNormCache>,
    dense: DenseCache,
    dropout: DropoutCache,
    output: DenseCache,
}

impl ForwardCache {
    /// Branch decisions of the forward pass (relu sides, pooling winners),
    /// used to exclude finite-difference probes that cross a kink.
    pub fn signature(&self) -> Vec<u32> {
        let mut sig = Vec::new();
        for s in &self.samples {
            sig.extend(s.conv.signature());
            sig.extend(s.pool.argmax().iter().map(|&i| i as u32));
        }
        sig.extend(self.dense.signature());
        sig
    }

    /// Batch statistics of the batchnorm layer, if it ran in training mode.
    pub fn batch_stats(&self) -> Option<&BatchStats> {
        self.batchnorm.as_ref().and_then(|c| c.stats())
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub probs: Vec<f64>,
    /// Present only for training-mode passes.
    pub cache: Option<ForwardCache>,
}

#[derive(Debug, Clone)]
pub struct LossAndGrads {
    /// BCE plus the L2 penalty.
    pub loss: f64,
    pub bce: f64,
    pub grads: Gradients,
    pub probs: Vec<f64>,
    /// Batchnorm statistics to fold into the running averages.
    pub batch_stats: Option<BatchStats>,
    /// Forward branch decisions, for gradient checking.
    pub signature: Vec<u32>,
}

impl Model {
    /// Random initialization from `config.seed`, with the embedding copied
    /// from `emb` (row 0 forced to zero).
    pub fn build(config: ModelConfig, emb: &Tensor) -> Result<Self> {
        config.validate()?;
        let expect = [config.vocab_size + 1, config.emb_dim];
        if emb.shape() != expect {
            return Err(shape(format!("embedding matrix {:?}, expected {:?}", emb.shape(), expect)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut p = Params::zeros(&config);
        p.batchnorm = config.has_batchnorm().then(|| BatchNormState::new(config.feature_dim()));
        p.embedding = emb.clone();
        p.embedding.row_mut(0).fill(0.0);
        let (k, e, f) = (config.kernel, config.emb_dim, config.conv_filters);
        p.conv_kernel = glorot_uniform(&[k, e, f], k * e, k * f, &mut rng);
        p.lstm_fwd = LstmParams::init(f, config.lstm_units, &mut rng);
        p.lstm_bwd = LstmParams::init(f, config.lstm_units, &mut rng);
        p.attention = AttentionParams::init(config.feature_dim(), &mut rng);
        let (flat, dense) = (config.flat_dim(), config.dense_units);
        p.dense_w = glorot_uniform(&[flat, dense], flat, dense, &mut rng);
        p.out_w = glorot_uniform(&[dense, 1], dense, 1, &mut rng);
        Ok(Self { config, params: p })
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.params
            .trainable(self.config.embeddings_trainable)
            .iter()
            .map(|(_, t)| t.len())
            .sum()
    }

    /// λ·Σ‖W‖² over the regularized matrices.
    pub fn l2_penalty(&self) -> f64 {
        if self.config.l2_lambda == 0.0 {
            return 0.0;
        }
        let sum: f64 = self
            .params
            .named()
            .iter()
            .filter(|(n, _)| REGULARIZED.contains(n))
            .map(|(_, t)| t.sum_sq())
            .sum();
        self.config.l2_lambda * sum
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.len() != self.config.maxlen {
            return Err(shape(format!("sequence length {}, model expects {}", tokens.len(), self.config.maxlen)));
        }
        let k = self.config.vocab_size;
        match tokens.iter().find(|&&t| t as usize > k) {
            Some(&index) => Err(Error::IndexOutOfRange { index, vocab_size: k }),
            None => Ok(()),
        }
    }

    fn embed(&self, tokens: &[u32]) -> Tensor {
        let e = self.config.emb_dim;
        let mut x = Tensor::zeros(&[tokens.len(), e]);
        for (t, &idx) in tokens.iter().enumerate() {
            x.row_mut(t).copy_from_slice(self.params.embedding.row(idx as usize));
        }
        x
    }

    fn trunk(&self, tokens: &[u32]) -> Result<(Tensor, SampleCache)> {
        let p = &self.params;
        let x = self.embed(tokens);
        let (c, conv) = conv1d_forward(&x, &p.conv_kernel, &p.conv_bias, Activation::Relu)?;
        let (pooled, pool) = maxpool1d(&c, self.config.pool)?;
        let (h, bilstm) = bilstm_forward(&pooled, &p.lstm_fwd, &p.lstm_bwd)?;
        let (y, _, attention) = attention_forward(&h, &p.attention)?;
        Ok((y, SampleCache { conv, pool, bilstm, attention }))
    }

    /// Forward pass over a batch of index sequences, each of length
    /// `maxlen`. Training mode uses batch statistics and dropout and keeps
    /// the caches; inference mode is deterministic.
    pub fn forward<S, R>(&self, batch: &[S], training: bool, rng: &mut R) -> Result<ForwardOutput>
    where
        S: AsRef<[u32]>,
        R: Rng + ?Sized,
    {
        if batch.is_empty() {
            return Ok(ForwardOutput { probs: Vec::new(), cache: None });
        }
        let c = &self.config;
        let p = &self.params;
        let (tp, f) = (c.pooled_len(), c.feature_dim());
        let mut stacked = Tensor::zeros(&[batch.len() * tp, f]);
        let mut samples = Vec::with_capacity(if training { batch.len() } else { 0 });
        for (i, seq) in batch.iter().enumerate() {
            let tokens = seq.as_ref();
            self.check_tokens(tokens)?;
            let (y, cache) = self.trunk(tokens)?;
            stacked.data_mut()[i * tp * f..(i + 1) * tp * f].copy_from_slice(y.data());
            if training {
                samples.push(cache);
            }
        }
        // Batchnorm normalizes each of the F channels over all B·T rows.
        let (normed, batchnorm) = match &p.batchnorm {
            Some(bn) => {
                let mode = if training { BnMode::Train } else { BnMode::Infer };
                let (y, cache) = batchnorm_forward(&stacked, bn, mode)?;
                (y, Some(cache))
            }
            None => (stacked, None),
        };
        let flat = normed.reshape(&[batch.len(), c.flat_dim()])?;
        let (hidden, dense) = dense_forward(&flat, &p.dense_w, &p.dense_b, Activation::Relu)?;
        let (dropped, dropout) = dropout_forward(&hidden, c.dropout, rng, training)?;
        let (logits, output) = dense_forward(&dropped, &p.out_w, &p.out_b, Activation::Identity)?;
        let probs = logits
            .data()
            .iter()
            .map(|&z| sigmoid(z).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
            .collect();
        let cache = training.then(|| ForwardCache {
            tokens: batch.iter().map(|s| s.as_ref().to_vec()).collect(),
            samples,
            batchnorm,
            dense,
            dropout,
            output,
        });
        Ok(ForwardOutput { probs, cache })
    }

    /// Gradients of a scalar loss given its derivative with respect to the
    /// pre-sigmoid logits. The L2 term is not included.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &[f64]) -> Result<Gradients> {
        let c = &self.config;
        let p = &self.params;
        let b = cache.tokens.len();
        if d_logits.len() != b {
            return Err(shape(format!("{} logit gradients for a batch of {b}", d_logits.len())));
        }
        let (tp, f) = (c.pooled_len(), c.feature_dim());
        let mut g = Params::zeros(c);

        let d_z = Tensor::from_vec(&[b, 1], d_logits.to_vec())?;
        let d_dropped = dense_backward(&cache.output, &p.out_w, &d_z, &mut g.out_w, &mut g.out_b);
        let d_hidden = dropout_backward(&cache.dropout, &d_dropped);
        let d_flat = dense_backward(&cache.dense, &p.dense_w, &d_hidden, &mut g.dense_w, &mut g.dense_b);
        let mut d_stacked = d_flat.reshape(&[b * tp, f])?;
        if let (Some(bn), Some(bn_cache), Some(gbn)) = (&p.batchnorm, &cache.batchnorm, g.batchnorm.as_mut()) {
            d_stacked = batchnorm_backward(bn_cache, bn, &d_stacked, &mut gbn.gamma, &mut gbn.beta);
        }

        for (i, (s, tokens)) in cache.samples.iter().zip(&cache.tokens).enumerate() {
            let d_y = Tensor::from_vec(&[tp, f], d_stacked.data()[i * tp * f..(i + 1) * tp * f].to_vec())?;
            let d_h = attention_backward(&s.attention, &p.attention, &d_y, &mut g.attention);
            let d_pooled = bilstm_backward(&s.bilstm, &p.lstm_fwd, &p.lstm_bwd, &d_h, &mut g.lstm_fwd, &mut g.lstm_bwd);
            let d_conv = maxpool1d_backward(&s.pool, &d_pooled);
            let d_x = conv1d_backward(&s.conv, &p.conv_kernel, &d_conv, &mut g.conv_kernel, &mut g.conv_bias);
            if c.embeddings_trainable {
                for (t, &idx) in tokens.iter().enumerate() {
                    if idx != 0 {
                        g.embedding.row_mut(idx as usize).iter_mut().zip(d_x.row(t)).for_each(|(a, d)| *a += d);
                    }
                }
            }
        }
        Ok(g)
    }

    /// Training-mode forward and backward of BCE plus the L2 penalty.
    pub fn loss_and_grads<S, R>(&self, batch: &[S], labels: &[f64], rng: &mut R) -> Result<LossAndGrads>
    where
        S: AsRef<[u32]>,
        R: Rng + ?Sized,
    {
        if batch.len() != labels.len() {
            return Err(shape(format!("{} sequences, {} labels", batch.len(), labels.len())));
        }
        if batch.is_empty() {
            return Err(invalid("empty batch"));
        }
        let out = self.forward(batch, true, rng)?;
        let cache = out.cache.ok_or(Error::ForwardNotCached)?;
        let bce = bce_loss(&out.probs, labels);
        let mut grads = self.backward(&cache, &bce_grad_logits(&out.probs, labels))?;
        let lambda = self.config.l2_lambda;
        if lambda != 0.0 {
            let weights = self.params.named();
            for (name, gt) in grads.named_mut() {
                if REGULARIZED.contains(&name) {
                    let w = weights.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).expect("same layout");
                    gt.add_scaled(2.0 * lambda, w);
                }
            }
        }
        Ok(LossAndGrads {
            loss: bce + self.l2_penalty(),
            bce,
            grads,
            probs: out.probs,
            batch_stats: cache.batch_stats().cloned(),
            signature: cache.signature(),
        })
    }

    /// Central finite-difference check of [`Model::loss_and_grads`] over every
    /// trainable scalar except the padding row of the embedding, which is
    /// pinned at zero. Dropout masks are redrawn from the same seed for every
    /// probe, so a nonzero dropout rate still yields a fixed function.
    pub fn check_gradients<S: AsRef<[u32]>>(&self, batch: &[S], labels: &[f64], step: f64) -> Result<GradCheckReport> {
        let trainable = self.config.embeddings_trainable;
        let run = |m: &Model| m.loss_and_grads(batch, labels, &mut ChaCha8Rng::seed_from_u64(0));
        let base = run(self)?;
        let skip = if trainable { self.config.emb_dim } else { 0 };
        let flat = |p: &Params| -> Vec<f64> {
            p.trainable(trainable).iter().flat_map(|(_, t)| t.data().iter().copied()).skip(skip).collect()
        };
        let point = flat(&self.params);
        let analytic = flat(&base.grads);
        let mut probe = self.clone();
        Ok(grad_check(
            |x| {
                let mut rest = x;
                for (i, (_, t)) in probe.params.trainable_mut(trainable).into_iter().enumerate() {
                    let dst = if i == 0 { &mut t.data_mut()[skip..] } else { t.data_mut() };
                    let (head, tail) = rest.split_at(dst.len());
                    dst.copy_from_slice(head);
                    rest = tail;
                }
                let r = run(&probe).expect("probe shares the validated batch");
                Probe { value: r.loss, signature: r.signature }
            },
            &point,
            &analytic,
            step,
        ))
    }

    /// Inference-mode probabilities, processed in fixed-size chunks.
    pub fn predict_batch<S: AsRef<[u32]>>(&self, batch: &[S]) -> Result<Vec<f64>> {
        // Inference draws no random numbers; the generator is a placeholder.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(INFER_CHUNK) {
            out.extend(self.forward(chunk, false, &mut rng)?.probs);
        }
        Ok(out)
    }

    pub fn predict(&self, seq: &EncodedSequence) -> Result<f64> {
        Ok(self.predict_batch(&[&seq.indices])?[0])
    }

    /// Attention weights over the pooled timesteps for one sequence.
    pub fn attention_weights(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        self.check_tokens(tokens)?;
        Ok(self.trunk(tokens)?.1.attention.alpha().to_vec())
    }
}

pub use weights::{load_weights, save_weights, read_weights, write_weights};
