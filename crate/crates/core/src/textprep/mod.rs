//! Raw text to fixed-length integer sequences.
//!
//! The pipeline order is fixed: [`normalize`] → [`tokenize`] →
//! [`remove_stopwords`] → [`stem`] → [`encode`] → [`pad_truncate`].
//! [`preprocess_document`] runs the whole chain against a built [`Vocabulary`].

mod porter;
mod vocab;

use std::collections::HashSet;
use std::path::Path;

pub use porter::stem;
pub use vocab::Vocabulary;

use crate::error::{invalid, Result};

/// Default number of vocabulary entries (excluding the padding index).
pub const DEFAULT_VOCAB_SIZE: usize = 2000;
/// Default encoded sequence length.
pub const DEFAULT_MAXLEN: usize = 100;
/// Index reserved for padding and for masked tokens.
pub const PAD: u32 = 0;

const SHIPPED_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

/// Ordered list of word tokens.
pub type TokenList = Vec<String>;

/// A document as read from the corpus file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub text: String,
    /// 1 = suicidal, 0 = non-suicidal.
    pub label: Option<u8>,
}

/// Fixed-length, pre-padded sequence of vocabulary indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedSequence {
    pub indices: Vec<u32>,
    /// Number of non-padding entries; they occupy the tail of `indices`.
    pub n_real: usize,
}

impl EncodedSequence {
    pub fn maxlen(&self) -> usize {
        self.indices.len()
    }

    /// The non-padding suffix.
    pub fn real(&self) -> &[u32] {
        &self.indices[self.indices.len() - self.n_real..]
    }

    /// First position holding a real token.
    pub fn first_real(&self) -> usize {
        self.indices.len() - self.n_real
    }
}

/// Stopword set.
#[derive(Debug, Clone)]
pub struct StopWords {
    words: HashSet<String>,
}

impl StopWords {
    /// The list shipped with the crate (127 English function words).
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_STOPWORDS)
    }

    /// One word per line; blank lines are ignored.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .map(str::to_string)
            .collect();
        Self { words }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            words: words.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl Default for StopWords {
    fn default() -> Self {
        Self::shipped()
    }
}

/// Lowercase, replace every character that is not an ASCII letter or digit
/// with a space, then collapse whitespace.
pub fn normalize(text: &str) -> String {
    let mut spaced = String::with_capacity(text.len());
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_ascii_lowercase() || c.is_ascii_digit() {
            spaced.push(c);
        } else {
            spaced.push(' ');
        }
    }
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Split normalized text on spaces, dropping purely numeric tokens.
pub fn tokenize(normalized: &str) -> TokenList {
    normalized
        .split(' ')
        .filter(|t| !t.is_empty() && !t.bytes().all(|b| b.is_ascii_digit()))
        .map(str::to_string)
        .collect()
}

pub fn remove_stopwords(tokens: TokenList, stoplist: &StopWords) -> TokenList {
    tokens.into_iter().filter(|t| !stoplist.contains(t)).collect()
}

/// normalize → tokenize → stopwords → stem.
pub fn tokens_of(text: &str, stoplist: &StopWords) -> TokenList {
    remove_stopwords(tokenize(&normalize(text)), stoplist)
        .iter()
        .map(|t| stem(t))
        .collect()
}

/// Map in-vocabulary tokens to their indices; out-of-vocabulary tokens are dropped.
pub fn encode(tokens: &[String], vocab: &Vocabulary) -> Vec<u32> {
    tokens.iter().filter_map(|t| vocab.index_of(t)).collect()
}

/// Pre-pad with zeros or pre-truncate (keeping the last `maxlen` entries).
pub fn pad_truncate(indices: &[u32], maxlen: usize) -> Result<EncodedSequence> {
    if maxlen == 0 {
        return Err(invalid("maxlen must be at least 1"));
    }
    let kept = &indices[indices.len().saturating_sub(maxlen)..];
    let mut out = vec![PAD; maxlen - kept.len()];
    out.extend_from_slice(kept);
    Ok(EncodedSequence {
        indices: out,
        n_real: kept.len(),
    })
}

pub fn preprocess_document(
    doc: &RawDocument,
    vocab: &Vocabulary,
    stoplist: &StopWords,
    maxlen: usize,
) -> Result<EncodedSequence> {
    pad_truncate(&encode(&tokens_of(&doc.text, stoplist), vocab), maxlen)
}
