//! Binary checkpoint format.
//!
//! ```text
//! "MRNEL1"
//! u32 metadata length, metadata (UTF-8 `key = value` lines)
//! repeated until EOF:
//!   u32 name length, name, u32 ndims, ndims × u32 dims, f32 data
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::BTreeMap;
use std::path::Path;

use super::{ModelConfig, ModelParams, Tensor};
use crate::config::KeyValues;
use crate::corpus::Embeddings;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"MRNEL1";
pub const CHECKPOINT_VERSION: u32 = 1;

const WORD_TABLE: &str = "word_emb";
const ENTITY_TABLE: &str = "entity_emb";

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    save_checkpoint_with(params, &KeyValues::default(), path)
}

/// Writes `params` with an extra hyperparameter block stored alongside the
/// model configuration.
pub fn save_checkpoint_with(params: &ModelParams, extra: &KeyValues, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(params, extra)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    read_checkpoint(path).map(|(p, _)| p)
}

/// Loads a checkpoint and checks every tensor against the shapes `expected`
/// implies.
pub fn load_checkpoint_expecting(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<ModelParams> {
    let params = load_checkpoint(path)?;
    let want = ModelParams::zeros(expected, Embeddings::new(expected.dim), Embeddings::new(expected.dim));
    for ((name, w), (_, f)) in want.groups().iter().zip(params.groups().iter()) {
        if w.shape != f.shape {
            return Err(Error::ShapeMismatch { name: name.to_string(), expected: w.shape.clone(), found: f.shape.clone() });
        }
    }
    if params.config.mode != expected.mode {
        return Err(Error::Checkpoint(format!("mode {} does not match expected {}", params.config.mode, expected.mode)));
    }
    Ok(params)
}

/// Loads parameters and the stored hyperparameter block.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams, KeyValues)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn encode(params: &ModelParams, extra: &KeyValues) -> Result<Vec<u8>> {
    let mut meta = KeyValues::default();
    meta.set("format_version", CHECKPOINT_VERSION);
    meta.set("seed", params.seed);
    meta.merge(&params.config.to_key_values());
    for (k, v) in extra.iter() {
        meta.set(&format!("hyper.{k}"), v);
    }
    meta.set("words", params.words.keys().join(" "));
    meta.set("entities", params.entities.keys().join(" "));
    let meta = meta.to_string();

    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, meta.len())?;
    out.extend_from_slice(meta.as_bytes());

    let words = Tensor { shape: vec![params.words.len(), params.words.dim()], data: params.words.data().to_vec() };
    let entities = Tensor { shape: vec![params.entities.len(), params.entities.dim()], data: params.entities.data().to_vec() };
    put_tensor(&mut out, WORD_TABLE, &words)?;
    put_tensor(&mut out, ENTITY_TABLE, &entities)?;
    for (name, t) in params.groups() {
        put_tensor(&mut out, name, t)?;
    }
    Ok(out)
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("value {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) -> Result<()> {
    put_u32(out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.shape.len())?;
    for &d in &t.shape {
        put_u32(out, d)?;
    }
    for &x in &t.data {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn decode(bytes: &[u8]) -> Result<(ModelParams, KeyValues)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(CHECKPOINT_MAGIC.len()).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let meta_len = r.u32()?;
    let meta = std::str::from_utf8(r.take(meta_len)?).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    let mut meta = KeyValues::parse_str(meta)?;

    let version = meta.remove("format_version").ok_or_else(|| Error::Checkpoint("missing format_version".into()))?;
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(Error::Checkpoint(format!("unsupported format version {version} (expected {CHECKPOINT_VERSION})")));
    }
    let seed: u64 = meta.get("seed").unwrap_or("0").parse().map_err(|e| Error::Checkpoint(format!("seed: {e}")))?;
    let split = |s: Option<String>| -> Vec<String> {
        s.map(|s| s.split_whitespace().map(str::to_string).collect()).unwrap_or_default()
    };
    let word_keys = split(meta.remove("words"));
    let entity_keys = split(meta.remove("entities"));

    let mut config = ModelConfig::default();
    let mut extra = KeyValues::default();
    for (k, v) in meta.iter() {
        if let Some(h) = k.strip_prefix("hyper.") {
            extra.set(h, v);
        } else if k != "seed" && !config.apply(&meta, k, v)? {
            return Err(Error::Checkpoint(format!("unknown metadata key {k:?}")));
        }
    }
    config.validate()?;

    let mut tensors = BTreeMap::new();
    while !r.done() {
        let name_len = r.u32()?;
        let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|e| Error::Checkpoint(format!("tensor name: {e}")))?;
        let ndims = r.u32()?;
        let shape = (0..ndims).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let count = count.ok_or_else(|| Error::Checkpoint(format!("tensor {name} shape overflows")))?;
        let raw = r.take(count.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect();
        if tensors.insert(name.clone(), Tensor { shape, data }).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
    }

    let mut table = |name: &str, keys: Vec<String>| -> Result<Embeddings> {
        let t = tensors.remove(name).ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        let want = vec![keys.len(), config.dim];
        if t.shape != want {
            return Err(Error::ShapeMismatch { name: name.into(), expected: want, found: t.shape });
        }
        Embeddings::from_parts(keys, config.dim, t.data)
    };
    let words = table(WORD_TABLE, word_keys)?;
    let entities = table(ENTITY_TABLE, entity_keys)?;

    let mut params = ModelParams::zeros(&config, words, entities);
    params.seed = seed;
    for (name, slot) in params.groups_mut() {
        let t = tensors.remove(name).ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if t.shape != slot.shape {
            return Err(Error::ShapeMismatch { name: name.into(), expected: slot.shape.clone(), found: t.shape });
        }
        *slot = t;
    }
    if let Some(name) = tensors.keys().next() {
        return Err(Error::Checkpoint(format!("unexpected tensor {name}")));
    }
    Ok((params, extra))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{init_params, Mode};

    fn sample(k: usize) -> ModelParams {
        let cfg = ModelConfig { dim: 4, relations: k, hidden: 3, mode: Mode::MentNorm, ..ModelConfig::default() };
        let mut words = Embeddings::new(4);
        words.insert("alpha".into(), &[0.1, 0.2, 0.3, 0.4]).unwrap();
        words.insert("beta".into(), &[1.0 / 3.0, -1.0, 2.5, 1e-9]).unwrap();
        let mut ents = Embeddings::new(4);
        ents.insert("E1".into(), &[0.5, -0.5, 0.25, 0.0]).unwrap();
        init_params(&cfg, 42, words, ents).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let p = sample(3);
        let mut extra = KeyValues::default();
        extra.set("margin", 0.01);
        save_checkpoint_with(&p, &extra, &path).unwrap();
        let (back, hyper) = read_checkpoint(&path).unwrap();
        assert_eq!(back, p);
        assert_eq!(hyper.get("margin"), Some("0.01"));
        for ((_, a), (_, b)) in p.groups().iter().zip(back.groups().iter()) {
            let bits = |t: &Tensor| t.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&sample(2), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&sample(2), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load_checkpoint(&path).unwrap_err().to_string().contains("truncated"));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&sample(2), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // same length, so the metadata length prefix stays valid
        let at = bytes.windows(18).position(|w| w == b"format_version = 1").unwrap();
        bytes[at + 17] = b'9';
        std::fs::write(&path, bytes).unwrap();
        assert!(load_checkpoint(&path).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn relation_count_mismatch_is_a_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let six = sample(6);
        save_checkpoint(&six, &path).unwrap();
        let expect = ModelConfig { relations: 3, ..six.config.clone() };
        match load_checkpoint_expecting(&path, &expect) {
            Err(Error::ShapeMismatch { name, expected, found }) => {
                assert_eq!(name, "rel");
                assert_eq!(expected, [3, 4]);
                assert_eq!(found, [6, 4]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
        assert!(load_checkpoint_expecting(&path, &six.config).is_ok());
    }
}
