//! CBOW word embeddings with negative sampling.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::netcore::{sigmoid, Tensor};
use crate::textprep::{TokenList, Vocabulary};

pub const DEFAULT_DIM: usize = 100;
const SAMPLING_POWER: f64 = 0.75;
/// The learning rate ends at `initial_lr / LR_FLOOR_DIVISOR`.
const LR_FLOOR_DIVISOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct W2VConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub min_count: u64,
    pub seed: u64,
}

impl Default for W2VConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            window: 5,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.025,
            min_count: 1,
            seed: 0,
        }
    }
}

impl W2VConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives == 0 || self.epochs == 0 {
            return Err(invalid("word2vec: dim, window, negatives and epochs must be >= 1"));
        }
        if !(self.initial_lr > 0.0) {
            return Err(invalid("word2vec: initial_lr must be positive"));
        }
        Ok(())
    }
}

/// Trained input vectors, one row per word. Output (context) vectors are
/// discarded after training.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl WordVectors {
    pub fn from_rows(dim: usize, rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut out = Self {
            dim,
            words: Vec::with_capacity(rows.len()),
            index: HashMap::with_capacity(rows.len()),
            data: Vec::with_capacity(rows.len() * dim),
        };
        for (word, v) in rows {
            if v.len() != dim {
                return Err(invalid(format!("vector for {word:?} has {} components, expected {dim}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(invalid(format!("vector for {word:?} is not finite")));
            }
            if out.index.insert(word.clone(), out.words.len()).is_some() {
                return Err(invalid(format!("duplicate word {word:?}")));
            }
            out.words.push(word);
            out.data.extend(v);
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// CSV with header `word,d0,...,d{dim-1}`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["word".to_string()];
        header.extend((0..self.dim).map(|i| format!("d{i}")));
        w.write_record(&header)?;
        for (i, word) in self.words.iter().enumerate() {
            let mut rec = vec![word.clone()];
            rec.extend(self.row(i).iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.get(0) != Some("word") || header.len() < 2 {
            return Err(Error::Format("vectors: header must start with `word`".into()));
        }
        let dim = header.len() - 1;
        for (i, name) in header.iter().skip(1).enumerate() {
            if name != format!("d{i}") {
                return Err(Error::Format(format!("vectors: unexpected column {name:?}")));
            }
        }
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let word = rec.get(0).unwrap_or_default().to_string();
            let v = rec
                .iter()
                .skip(1)
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("vectors row {}: {e}", line + 2)))?;
            rows.push((word, v));
        }
        Self::from_rows(dim, rows)
    }
}

/// Draws word ids with probability proportional to `count^0.75`.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    pub fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(SAMPLING_POWER);
                acc
            })
            .collect();
        Self { cumulative }
    }

    /// Normalized sampling probabilities.
    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.cumulative.last().copied().unwrap_or(0.0);
        let mut prev = 0.0;
        self.cumulative
            .iter()
            .map(|&c| {
                let p = (c - prev) / total;
                prev = c;
                p
            })
            .collect()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("sampler over an empty vocabulary");
        let u = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
    }
}

/// Trains CBOW with negative sampling on a single thread.
pub fn train_cbow(corpus: &[TokenList], config: &W2VConfig) -> Result<WordVectors> {
    config.validate()?;
    // Count words, keeping first-occurrence order for ties.
    let mut counts: HashMap<&str, (u64, usize)> = HashMap::new();
    for w in corpus.iter().flatten() {
        let next = counts.len();
        counts.entry(w.as_str()).or_insert((0, next)).0 += 1;
    }
    let mut kept: Vec<(&str, u64, usize)> = counts
        .into_iter()
        .filter(|(_, (c, _))| *c >= config.min_count)
        .map(|(w, (c, first))| (w, c, first))
        .collect();
    if kept.len() < 2 {
        return Err(Error::DegenerateCorpus(format!(
            "{} distinct word(s) after min_count filtering",
            kept.len()
        )));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let ids: HashMap<&str, usize> = kept.iter().enumerate().map(|(i, k)| (k.0, i)).collect();
    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.iter().filter_map(|w| ids.get(w.as_str()).copied()).collect())
        .collect();

    let dim = config.dim;
    let n_words = kept.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let half = 0.5 / dim as f64;
    let mut syn0: Vec<f64> = (0..n_words * dim).map(|_| rng.random_range(-half..half)).collect();
    let mut syn1 = vec![0.0; n_words * dim];
    let sampler = NegativeSampler::new(&kept.iter().map(|k| k.1).collect::<Vec<_>>());

    let total_updates = (config.epochs * sentences.iter().map(Vec::len).sum::<usize>()).max(1);
    let lr_floor = config.initial_lr / LR_FLOOR_DIVISOR;
    let mut done = 0usize;
    let mut h = vec![0.0; dim];
    let mut err = vec![0.0; dim];

    for _ in 0..config.epochs {
        for sent in &sentences {
            for (pos, &center) in sent.iter().enumerate() {
                let progress = done as f64 / total_updates as f64;
                let lr = config.initial_lr - (config.initial_lr - lr_floor) * progress;
                done += 1;

                let lo = pos.saturating_sub(config.window);
                let hi = (pos + config.window + 1).min(sent.len());
                let n_ctx = hi - lo - 1;
                if n_ctx == 0 {
                    continue;
                }
                h.fill(0.0);
                for (j, &c) in sent[lo..hi].iter().enumerate() {
                    if lo + j != pos {
                        for (acc, x) in h.iter_mut().zip(&syn0[c * dim..(c + 1) * dim]) {
                            *acc += x;
                        }
                    }
                }
                let inv = 1.0 / n_ctx as f64;
                h.iter_mut().for_each(|x| *x *= inv);

                err.fill(0.0);
                for s in 0..=config.negatives {
                    let (target, label) = if s == 0 {
                        (center, 1.0)
                    } else {
                        let t = sampler.sample(&mut rng);
                        if t == center {
                            continue;
                        }
                        (t, 0.0)
                    };
                    let out = &mut syn1[target * dim..(target + 1) * dim];
                    let dot: f64 = h.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
                    let g = (label - sigmoid(dot)) * lr;
                    for ((e, o), x) in err.iter_mut().zip(out.iter_mut()).zip(&h) {
                        *e += g * *o;
                        *o += g * x;
                    }
                }
                // As in the reference implementation, every context word
                // receives the full error even though `h` is their mean.
                for (j, &c) in sent[lo..hi].iter().enumerate() {
                    if lo + j != pos {
                        for (x, e) in syn0[c * dim..(c + 1) * dim].iter_mut().zip(&err) {
                            *x += e;
                        }
                    }
                }
            }
        }
    }

    let rows = kept
        .iter()
        .enumerate()
        .map(|(i, k)| (k.0.to_string(), syn0[i * dim..(i + 1) * dim].to_vec()))
        .collect();
    WordVectors::from_rows(dim, rows)
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(invalid("cosine: vectors differ in length"));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// The `k` nearest words by cosine, most similar first, ties by word.
/// Zero vectors among the candidates score 0.
pub fn most_similar(word: &str, k: usize, vectors: &WordVectors) -> Result<Vec<(String, f64)>> {
    if k == 0 {
        return Err(invalid("most_similar: k must be >= 1"));
    }
    let q = vectors
        .get(word)
        .ok_or_else(|| Error::NotInVocabulary(word.to_string()))?;
    let mut scored = Vec::with_capacity(vectors.len());
    for (i, w) in vectors.words.iter().enumerate() {
        if w == word {
            continue;
        }
        let s = match cosine(q, vectors.row(i)) {
            Ok(s) => s,
            Err(Error::ZeroVector) if vectors.row(i).iter().all(|&x| x == 0.0) => 0.0,
            Err(e) => return Err(e),
        };
        scored.push((w.clone(), s));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// `(K+1) × dim` matrix whose row `i` is the vector of vocabulary word `i`.
/// Row 0 (padding) and words without a vector stay zero.
pub fn build_embedding_matrix(vocab: &Vocabulary, vectors: &WordVectors) -> Tensor {
    let dim = vectors.dim();
    let mut m = Tensor::zeros(&[vocab.len() + 1, dim]);
    for (i, w) in vocab.words().enumerate() {
        if let Some(v) = vectors.get(w) {
            m.row_mut(i + 1).copy_from_slice(v);
        }
    }
    m
}
