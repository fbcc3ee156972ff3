//! Corpus CSV ingestion and the planted synthetic corpus.

use std::collections::HashSet;
use std::io::{Read, Write};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::textprep::{normalize, tokenize, RawDocument};

pub const POSITIVE_LABEL: &str = "suicide";
pub const NEGATIVE_LABEL: &str = "non-suicide";

/// Accepts the textual labels and their 1/0 spellings. Empty means unlabeled.
pub fn parse_label(field: &str) -> std::result::Result<Option<u8>, String> {
    match field.trim() {
        "" => Ok(None),
        POSITIVE_LABEL | "1" => Ok(Some(1)),
        NEGATIVE_LABEL | "0" => Ok(Some(0)),
        other => Err(format!("unknown label {other:?}")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line in the file.
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusRead {
    pub docs: Vec<RawDocument>,
    pub errors: Vec<RowError>,
}

/// Reads a `text,label` CSV. A `class` column is accepted in place of
/// `label`; other columns are ignored. Bad rows are collected, not fatal.
pub fn read_corpus<R: Read>(reader: R) -> Result<CorpusRead> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let text_col = col("text").ok_or_else(|| invalid("corpus header has no `text` column"))?;
    let label_col = col("label").or_else(|| col("class"));
    let mut out = CorpusRead::default();
    for row in r.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.errors.push(RowError { line, message: e.to_string() });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        let Some(text) = row.get(text_col) else {
            out.errors.push(RowError { line, message: "missing text field".into() });
            continue;
        };
        let label = match label_col.map(|c| parse_label(row.get(c).unwrap_or(""))) {
            None => None,
            Some(Ok(l)) => l,
            Some(Err(message)) => {
                out.errors.push(RowError { line, message });
                continue;
            }
        };
        out.docs.push(RawDocument { text: text.to_string(), label });
    }
    Ok(out)
}

pub fn write_corpus<W: Write>(docs: &[RawDocument], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["text", "label"])?;
    for d in docs {
        let label = match d.label {
            Some(1) => POSITIVE_LABEL,
            Some(_) => NEGATIVE_LABEL,
            None => "",
        };
        w.write_record([d.text.as_str(), label])?;
    }
    w.flush()?;
    Ok(())
}

/// Planted risk words. None is a stopword and their stems are distinct.
pub const RISK_WORDS: [&str; 24] = [
    "hopeless", "worthless", "alone", "die", "pain", "suicide", "kill", "empty", "tired", "goodbye", "hurt", "numb",
    "trapped", "burden", "overdose", "pills", "cry", "dark", "useless", "hate", "scared", "broken", "bleed", "funeral",
];

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aio";
const FINAL_VOWELS: &[u8] = b"ao";

/// The `i`-th neutral pseudo-word: consonant-vowel syllables ending in `a`
/// or `o`, which the stemmer leaves untouched.
pub fn neutral_word(i: usize) -> String {
    let (c, v, f) = (CONSONANTS.len(), VOWELS.len(), FINAL_VOWELS.len());
    let mut n = i;
    let mut syllables = 2;
    let mut block = (c * v) * (c * f);
    while n >= block {
        n -= block;
        syllables += 1;
        block *= c * v;
    }
    let mut out = Vec::with_capacity(2 * syllables);
    for s in 0..syllables {
        let vowels = if s + 1 == syllables { FINAL_VOWELS } else { VOWELS };
        out.push(CONSONANTS[n % c]);
        n /= c;
        out.push(vowels[n % vowels.len()]);
        n /= vowels.len();
    }
    String::from_utf8(out).expect("ASCII")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_docs: usize,
    pub risk_lexicon: usize,
    pub neutral_lexicon: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Fraction of each class whose label is flipped.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { n_docs: 2000, risk_lexicon: 20, neutral_lexicon: 400, min_len: 10, max_len: 40, noise: 0.02, seed: 0 }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_docs < 2 {
            return Err(invalid("synthetic: n_docs must be >= 2"));
        }
        if self.risk_lexicon == 0 || self.risk_lexicon > RISK_WORDS.len() {
            return Err(invalid(format!("synthetic: risk_lexicon must be in 1..={}", RISK_WORDS.len())));
        }
        if self.neutral_lexicon == 0 {
            return Err(invalid("synthetic: neutral_lexicon must be >= 1"));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(invalid("synthetic: need 1 <= min_len <= max_len"));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(invalid("synthetic: noise must lie in [0, 0.5)"));
        }
        Ok(())
    }

    pub fn risk_words(&self) -> &'static [&'static str] {
        &RISK_WORDS[..self.risk_lexicon]
    }
}

/// Function words and clutter sprinkled between content words; all of it is
/// removed again by preprocessing.
const FILLERS: [&str; 10] = ["i", "the", "and", "my", "it", "is", "was", "to", "just", "so"];

/// Balanced documents: the first half carry one to three risk words, the
/// rest none. Then `round(noise * class size)` labels are flipped in each
/// class, and the documents are shuffled.
pub fn generate(spec: &SyntheticSpec) -> Result<Vec<RawDocument>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let neutral: Vec<String> = (0..spec.neutral_lexicon).map(neutral_word).collect();
    let risk = spec.risk_words();
    let n_pos = spec.n_docs / 2;
    let mut docs = Vec::with_capacity(spec.n_docs);
    for d in 0..spec.n_docs {
        let positive = d < n_pos;
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let mut words: Vec<&str> = (0..len).map(|_| neutral.choose(&mut rng).expect("nonempty").as_str()).collect();
        if positive {
            let k = rng.random_range(1..=3.min(len));
            for slot in rand::seq::index::sample(&mut rng, len, k) {
                words[slot] = risk.choose(&mut rng).expect("nonempty");
            }
        }
        docs.push(RawDocument { text: surface(&words, &mut rng), label: Some(positive as u8) });
    }
    for range in [0..n_pos, n_pos..spec.n_docs] {
        let flips = (spec.noise * range.len() as f64).round() as usize;
        for i in rand::seq::index::sample(&mut rng, range.len(), flips) {
            let doc = &mut docs[range.start + i];
            doc.label = doc.label.map(|l| 1 - l);
        }
    }
    docs.shuffle(&mut rng);
    Ok(docs)
}

fn surface(words: &[&str], rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        if rng.random_bool(0.3) {
            out.push_str(FILLERS.choose(rng).expect("nonempty"));
            out.push(' ');
        }
        if rng.random_bool(0.1) {
            let mut c = w.chars();
            out.extend(c.next().map(|f| f.to_ascii_uppercase()));
            out.push_str(c.as_str());
        } else {
            out.push_str(w);
        }
        if rng.random_bool(0.05) {
            out.push_str(&format!(" {}", rng.random_range(1..100)));
        }
        if rng.random_bool(0.1) {
            out.push_str([".", "!", ",", "..."].choose(rng).expect("nonempty"));
        }
    }
    out
}

/// 1 iff the document contains a word of `lexicon`.
pub fn presence_rule(text: &str, lexicon: &[&str]) -> u8 {
    let set: HashSet<&str> = lexicon.iter().copied().collect();
    tokenize(&normalize(text)).iter().any(|t| set.contains(t.as_str())) as u8
}
