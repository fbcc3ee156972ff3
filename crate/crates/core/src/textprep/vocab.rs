use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::TokenList;
use crate::error::{Error, Result};

/// Frequency-ranked word index. Index 0 is reserved for padding, so words
/// occupy `1..=len()`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    word_to_index: HashMap<String, u32>,
    /// `index_to_word[i - 1]` is the word at index `i`.
    index_to_word: Vec<String>,
    frequencies: Vec<u64>,
    max_size: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct VocabRow {
    word: String,
    index: u32,
    frequency: u64,
}

impl Vocabulary {
    /// Keep the `max_size` most frequent words. Ties go to the word seen first
    /// in corpus order.
    pub fn build(corpus: &[TokenList], max_size: usize) -> Self {
        // word -> (count, first occurrence)
        let mut counts: HashMap<&str, (u64, usize)> = HashMap::new();
        let mut seen = 0usize;
        for doc in corpus {
            for token in doc {
                counts.entry(token.as_str()).or_insert((0, seen)).0 += 1;
                seen += 1;
            }
        }
        let mut ranked: Vec<(&str, u64, usize)> =
            counts.into_iter().map(|(w, (c, first))| (w, c, first)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        ranked.truncate(max_size);

        let mut vocab = Self {
            max_size,
            ..Self::default()
        };
        for (word, count, _) in ranked {
            vocab.push(word.to_string(), count);
        }
        vocab
    }

    fn push(&mut self, word: String, frequency: u64) {
        let index = self.index_to_word.len() as u32 + 1;
        self.word_to_index.insert(word.clone(), index);
        self.index_to_word.push(word);
        self.frequencies.push(frequency);
    }

    /// Number of words K (the padding index is not counted).
    pub fn len(&self) -> usize {
        self.index_to_word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_to_word.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn index_of(&self, word: &str) -> Option<u32> {
        self.word_to_index.get(word).copied()
    }

    /// Word at a vocabulary index; `None` for padding or out-of-range indices.
    pub fn word(&self, index: u32) -> Option<&str> {
        let i = (index as usize).checked_sub(1)?;
        self.index_to_word.get(i).map(String::as_str)
    }

    pub fn frequency(&self, index: u32) -> Option<u64> {
        let i = (index as usize).checked_sub(1)?;
        self.frequencies.get(i).copied()
    }

    /// Words in index order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.index_to_word.iter().map(String::as_str)
    }

    /// CSV with header `word,index,frequency`, one row per word in index order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (i, (word, &frequency)) in self.index_to_word.iter().zip(&self.frequencies).enumerate() {
            w.serialize(VocabRow {
                word: word.clone(),
                index: i as u32 + 1,
                frequency,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut vocab = Self::default();
        for row in r.deserialize() {
            let row: VocabRow = row?;
            if row.index as usize != vocab.len() + 1 {
                return Err(Error::Format(format!(
                    "vocabulary indices must be contiguous from 1; found {} after {}",
                    row.index,
                    vocab.len()
                )));
            }
            if vocab.word_to_index.contains_key(&row.word) {
                return Err(Error::Format(format!("duplicate vocabulary word {:?}", row.word)));
            }
            vocab.push(row.word, row.frequency);
        }
        vocab.max_size = vocab.len();
        Ok(vocab)
    }
}
