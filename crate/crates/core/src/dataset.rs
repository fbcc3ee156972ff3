//! Encoded corpus: vocabulary indices per document, labels and the split.
//!
//! Binary layout, little-endian: `"SIDD"`, u32 version, u32 maxlen,
//! u32 vocab size, u64 document count, then per document a label byte
//! (255 = unlabeled), u32 length and that many u32 indices, then for train,
//! val and test a u64 count followed by u64 document indices.
//!
//! Documents are stored before padding so embeddings can see every
//! in-vocabulary token; [`EncodedDataset::sequence`] pads on demand.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::textprep::{encode, pad_truncate, tokens_of, EncodedSequence, RawDocument, StopWords, TokenList, Vocabulary};
use crate::trainer::{split, Examples, SplitIndices};

const MAGIC: &[u8; 4] = b"SIDD";
const VERSION: u32 = 1;
const UNLABELED: u8 = 255;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedDataset {
    pub maxlen: usize,
    pub vocab_size: usize,
    pub docs: Vec<Vec<u32>>,
    pub labels: Vec<Option<u8>>,
    pub splits: SplitIndices,
}

/// Output of [`prepare`].
#[derive(Debug, Clone)]
pub struct Prepared {
    pub vocab: Vocabulary,
    pub dataset: EncodedDataset,
    /// Documents whose encoding came out empty.
    pub empty_docs: Vec<usize>,
}

/// Tokenize, split (stratified on labels), build the vocabulary on the
/// training split only, and encode every document.
pub fn prepare(
    docs: &[RawDocument],
    stoplist: &StopWords,
    vocab_size: usize,
    maxlen: usize,
    seed: u64,
) -> Result<Prepared> {
    if maxlen == 0 {
        return Err(invalid("maxlen must be at least 1"));
    }
    let labels: Vec<u8> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| d.label.ok_or_else(|| invalid(format!("document {i} has no label"))))
        .collect::<Result<_>>()?;
    let splits = split(&labels, seed)?;
    let tokens: Vec<TokenList> = docs.iter().map(|d| tokens_of(&d.text, stoplist)).collect();
    let train_tokens: Vec<TokenList> = splits.train.iter().map(|&i| tokens[i].clone()).collect();
    let vocab = Vocabulary::build(&train_tokens, vocab_size);
    let encoded: Vec<Vec<u32>> = tokens.iter().map(|t| encode(t, &vocab)).collect();
    let empty_docs = encoded.iter().enumerate().filter(|(_, e)| e.is_empty()).map(|(i, _)| i).collect();
    let dataset = EncodedDataset {
        maxlen,
        vocab_size: vocab.len(),
        docs: encoded,
        labels: labels.into_iter().map(Some).collect(),
        splits,
    };
    Ok(Prepared { vocab, dataset, empty_docs })
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn sequence(&self, i: usize) -> EncodedSequence {
        pad_truncate(&self.docs[i], self.maxlen).expect("maxlen >= 1")
    }

    pub fn sequences(&self, indices: &[usize]) -> Vec<EncodedSequence> {
        indices.iter().map(|&i| self.sequence(i)).collect()
    }

    /// Padded sequences and labels of all documents, for the trainer.
    pub fn examples(&self) -> Result<Examples> {
        let labels = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| invalid(format!("document {i} has no label"))))
            .collect::<Result<Vec<_>>>()?;
        Examples::new((0..self.len()).map(|i| self.sequence(i).indices).collect(), labels)
    }

    /// Words of the given documents, unpadded, for embedding training.
    pub fn sentences(&self, indices: &[usize], vocab: &Vocabulary) -> Result<Vec<TokenList>> {
        indices
            .iter()
            .map(|&i| {
                self.docs[i]
                    .iter()
                    .map(|&ix| {
                        vocab.word(ix).map(str::to_string).ok_or(Error::IndexOutOfRange {
                            index: ix,
                            vocab_size: vocab.len(),
                        })
                    })
                    .collect()
            })
            .collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.maxlen as u32).to_le_bytes())?;
        w.write_all(&(self.vocab_size as u32).to_le_bytes())?;
        w.write_all(&(self.docs.len() as u64).to_le_bytes())?;
        for (doc, label) in self.docs.iter().zip(&self.labels) {
            w.write_all(&[label.unwrap_or(UNLABELED)])?;
            w.write_all(&(doc.len() as u32).to_le_bytes())?;
            for ix in doc {
                w.write_all(&ix.to_le_bytes())?;
            }
        }
        for part in [&self.splits.train, &self.splits.val, &self.splits.test] {
            w.write_all(&(part.len() as u64).to_le_bytes())?;
            for &i in part {
                w.write_all(&(i as u64).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("dataset: {m}"));
        let mut magic = [0; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let maxlen = read_u32(&mut r)? as usize;
        let vocab_size = read_u32(&mut r)? as usize;
        let n = read_u64(&mut r)? as usize;
        if maxlen == 0 {
            return Err(bad("maxlen 0".into()));
        }
        let mut docs = Vec::with_capacity(n.min(1 << 20));
        let mut labels = Vec::with_capacity(n.min(1 << 20));
        for d in 0..n {
            let mut label = [0u8];
            r.read_exact(&mut label)?;
            labels.push(match label[0] {
                UNLABELED => None,
                l @ (0 | 1) => Some(l),
                l => return Err(bad(format!("document {d}: label byte {l}"))),
            });
            let len = read_u32(&mut r)? as usize;
            let doc = (0..len).map(|_| read_u32(&mut r)).collect::<Result<Vec<_>>>()?;
            if let Some(&ix) = doc.iter().find(|&&ix| ix == 0 || ix as usize > vocab_size) {
                return Err(bad(format!("document {d}: index {ix} outside 1..={vocab_size}")));
            }
            docs.push(doc);
        }
        let mut parts = Vec::with_capacity(3);
        for _ in 0..3 {
            let len = read_u64(&mut r)? as usize;
            if len > n {
                return Err(bad(format!("split of {len} exceeds {n} documents")));
            }
            let part = (0..len).map(|_| read_u64(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            if part.iter().any(|&i| i >= n) {
                return Err(bad("split index out of range".into()));
            }
            parts.push(part);
        }
        let mut trailing = [0u8];
        if r.read(&mut trailing)? != 0 {
            return Err(bad("trailing bytes".into()));
        }
        let test = parts.pop().expect("3 parts");
        let val = parts.pop().expect("3 parts");
        let train = parts.pop().expect("3 parts");
        Ok(Self { maxlen, vocab_size, docs, labels, splits: SplitIndices { train, val, test } })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
