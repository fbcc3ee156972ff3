//! Binary weights file.
//!
//! Layout, all integers little-endian:
//! `"SIDN"`, u32 version, u32 config length, config JSON, u32 tensor count,
//! then per tensor (u32 name length, name, u32 rank, u64 dims.., u64 offset)
//! where offset counts f64 elements from the start of the data block, then
//! the data block of little-endian f64 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Model, ModelConfig, Params};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SIDN";
const VERSION: u32 = 1;

pub fn write_weights<W: Write>(model: &Model, mut w: W) -> Result<()> {
    let config = serde_json::to_vec(&model.config)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(&config)?;
    let named = model.params.named();
    w.write_all(&(named.len() as u32).to_le_bytes())?;
    let mut offset = 0u64;
    for (name, t) in &named {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        w.write_all(&offset.to_le_bytes())?;
        offset += t.len() as u64;
    }
    for (_, t) in &named {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(format!("weights: {}", msg.into()))
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

/// Upper bound on any length field, to fail fast on garbage input.
const MAX_FIELD: u64 = 1 << 32;

pub fn read_weights<R: Read>(mut r: R) -> Result<Model> {
    let mut magic = [0; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(format_err("bad magic bytes"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let mut config = vec![0; read_u32(&mut r)? as usize];
    r.read_exact(&mut config)?;
    let config: ModelConfig = serde_json::from_slice(&config)?;
    config.validate()?;
    let mut params = Params::zeros(&config);

    let count = read_u32(&mut r)? as usize;
    let mut manifest = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        if len > 256 {
            return Err(format_err("tensor name too long"));
        }
        let mut name = vec![0; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| format_err("tensor name is not UTF-8"))?;
        let rank = read_u32(&mut r)?;
        if rank > 8 {
            return Err(format_err(format!("{name}: rank {rank}")));
        }
        let dims = (0..rank)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let offset = read_u64(&mut r)?;
        if offset > MAX_FIELD {
            return Err(format_err(format!("{name}: offset {offset}")));
        }
        manifest.push((name, dims, offset as usize));
    }

    let expected = params.named_mut();
    if manifest.len() != expected.len() {
        return Err(format_err(format!("{} tensors, config implies {}", manifest.len(), expected.len())));
    }
    let total: usize = expected.iter().map(|(_, t)| t.len()).sum();
    let mut data = vec![0u8; total * 8];
    r.read_exact(&mut data)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(format_err("trailing bytes after data block"));
    }
    for (name, t) in expected {
        let (_, dims, offset) = manifest
            .iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| format_err(format!("missing tensor {name}")))?;
        if dims.as_slice() != t.shape() {
            return Err(format_err(format!("{name}: shape {dims:?}, config implies {:?}", t.shape())));
        }
        let bytes = data
            .get(offset * 8..(offset + t.len()) * 8)
            .ok_or_else(|| format_err(format!("{name}: data out of bounds")))?;
        for (v, chunk) in t.data_mut().iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
    }
    if !params.all_finite() {
        return Err(format_err("non-finite parameter values"));
    }
    Ok(Model { config, params })
}

pub fn save_weights(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write_weights(model, BufWriter::new(File::create(path)?))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Model> {
    read_weights(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use crate::netcore::Tensor;

    fn model() -> Model {
        let c = ModelConfig {
            variant: Variant::Finetuned,
            vocab_size: 6,
            maxlen: 7,
            emb_dim: 3,
            conv_filters: 2,
            kernel: 2,
            pool: 2,
            lstm_units: 2,
            dense_units: 3,
            dropout: 0.5,
            l2_lambda: 0.01,
            embeddings_trainable: true,
            seed: 4,
        };
        let mut m = Model::build(c, &Tensor::filled(&[7, 3], 0.25)).unwrap();
        m.params.batchnorm.as_mut().unwrap().running_var.fill(0.7);
        m
    }

    #[test]
    fn roundtrip_is_exact() {
        let m = model();
        let mut buf = Vec::new();
        write_weights(&m, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"SIDN");
        assert_eq!(read_weights(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut buf = Vec::new();
        write_weights(&model(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_weights(bad.as_slice()), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(read_weights(bad.as_slice()).is_err());
        assert!(read_weights(&buf[..buf.len() - 3]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_weights(long.as_slice()).is_err());
    }
}
