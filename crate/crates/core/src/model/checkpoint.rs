//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "DCONVCKP"
//! version    u32
//! config_len u64, config TOML (UTF-8)
//! hash       32 bytes, SHA-256 of the config TOML
//! count      u32
//! count x { name_len u16, name, rank u8, dims u64 x rank, values f64 x prod(dims) }
//! ```
//!
//! Entries appear in [`Model::named_tensors`] order and include batch-norm
//! running statistics.

use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::network::{build_model, Model};
use crate::error::{Error, Result};
use crate::CHECKPOINT_VERSION;

const MAGIC: &[u8; 8] = b"DCONVCKP";

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let cfg = model.config.to_toml();
    let tensors = model.named_tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    out.extend_from_slice(cfg.as_bytes());
    out.extend_from_slice(&model.config.hash());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for d in t.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in t.data().iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, param: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint {
                param: param.to_string(),
                msg: format!("truncated at byte {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, param: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, param)?.try_into().unwrap()))
    }

    fn u32(&mut self, param: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, param)?.try_into().unwrap()))
    }
}

/// Decodes a checkpoint; the model is returned only if every tensor loaded.
pub fn decode_checkpoint(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<Model> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8, "<header>")? != MAGIC {
        return Err(Error::Incompatible("not a checkpoint file (bad magic)".into()));
    }
    let version = c.u32("<header>")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Incompatible(format!(
            "checkpoint version {version}, this build reads version {CHECKPOINT_VERSION}"
        )));
    }
    let cfg_len = c.u64("<config>")? as usize;
    let text = std::str::from_utf8(c.take(cfg_len, "<config>")?).map_err(|_| Error::Checkpoint {
        param: "<config>".into(),
        msg: "config is not UTF-8".into(),
    })?;
    let cfg = ModelConfig::from_toml(text)?;
    let stored: [u8; 32] = c.take(32, "<config>")?.try_into().unwrap();
    if stored != cfg.hash() {
        return Err(Error::Incompatible("stored config hash does not match the embedded config".into()));
    }
    if let Some(want) = expected {
        if want.hash() != stored {
            return Err(Error::Incompatible(format!(
                "checkpoint holds config `{}`, which differs from the requested `{}`",
                cfg.name, want.name
            )));
        }
    }

    let model = build_model(&cfg, 0)?;
    let tensors = model.named_tensors();
    let count = c.u32("<header>")? as usize;
    if count != tensors.len() {
        return Err(Error::Incompatible(format!(
            "checkpoint holds {count} tensors, the config defines {}",
            tensors.len()
        )));
    }
    for (name, t) in &tensors {
        let len = u16::from_le_bytes(c.take(2, name)?.try_into().unwrap()) as usize;
        let found = c.take(len, name)?;
        if found != name.as_bytes() {
            return Err(Error::Checkpoint {
                param: name.clone(),
                msg: format!("found `{}` instead", String::from_utf8_lossy(found)),
            });
        }
        let rank = c.take(1, name)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(c.u64(name)? as usize);
        }
        if dims != t.shape() {
            return Err(Error::Checkpoint {
                param: name.clone(),
                msg: format!("shape {dims:?}, expected {:?}", t.shape()),
            });
        }
        let raw = c.take(8 * t.numel(), name)?;
        let values: Vec<f64> = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        t.set_data(&values)?;
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint {
            param: "<trailer>".into(),
            msg: format!("{} unexpected trailing bytes", bytes.len() - c.pos),
        });
    }
    Ok(model)
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, None)
}

/// Like [`load_checkpoint`] but fails unless the stored config equals `cfg`.
pub fn load_checkpoint_expecting(path: &Path, cfg: &ModelConfig) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, Some(cfg))
}
