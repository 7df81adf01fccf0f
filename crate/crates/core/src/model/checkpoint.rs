//! `EATCKPT1` checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "EATCKPT1"
//! cfg_len    u64
//! cfg        cfg_len bytes of UTF-8 TOML ([model] table, optional [state])
//! n_records  u64
//! record*    path_len u32, path bytes, ndim u32, ndim × u64 dims,
//!            ∏dims × f64
//! ```
//!
//! Model parameters are stored under their layer path. Optimizer state and
//! EMA shadows use the `state/` prefix.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EatConfig, EatModel};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"EATCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub path: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub records: Vec<Record>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    model: EatConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state: Option<toml::Table>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| bad("length overflows usize"))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("invalid UTF-8"))
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.config.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.path.len() as u32).to_le_bytes());
            out.extend_from_slice(r.path.as_bytes());
            out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
            for &d in &r.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &r.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8).map_err(|_| bad("missing magic"))? != MAGIC {
            return Err(bad("bad magic, not an EATCKPT1 file"));
        }
        let n = r.len()?;
        let config = r.string(n)?;
        let count = r.len()?;
        let mut records = Vec::new();
        for _ in 0..count {
            let pl = r.u32()? as usize;
            let path = r.string(pl)?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.len()?);
            }
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad(format!("{path}: shape overflows")))?;
            let bytes = r.take(numel.checked_mul(8).ok_or_else(|| bad("shape overflows"))?)?;
            let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            records.push(Record { path, shape, data });
        }
        if r.pos != buf.len() {
            return Err(bad(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Self { config, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    pub fn find(&self, path: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.path == path)
    }

    /// Model configuration stored in the header.
    pub fn model_config(&self) -> Result<EatConfig> {
        let h: Header = toml::from_str(&self.config).map_err(|e| bad(format!("config: {e}")))?;
        Ok(h.model)
    }

    /// The optional `[state]` table.
    pub fn state(&self) -> Result<Option<toml::Table>> {
        let h: Header = toml::from_str(&self.config).map_err(|e| bad(format!("config: {e}")))?;
        Ok(h.state)
    }

    /// Packs a model, optional extra records and an optional state table.
    pub fn from_model(model: &EatModel, extra: Vec<Record>, state: Option<toml::Table>) -> Result<Self> {
        let header = Header { model: model.config().clone(), state };
        let config = toml::to_string(&header).map_err(|e| bad(format!("config: {e}")))?;
        let mut records: Vec<Record> =
            model.params().params().iter().map(|p| Record { path: p.path.clone(), shape: p.shape.clone(), data: p.data.clone() }).collect();
        records.extend(extra);
        Ok(Self { config, records })
    }

    /// Rebuilds the model and loads every parameter by path.
    pub fn to_model(&self) -> Result<EatModel> {
        let cfg = self.model_config()?;
        let mut model = EatModel::build(&cfg, 0)?;
        for p in model.params_mut().params_mut() {
            let r = self.find(&p.path).ok_or_else(|| bad(format!("missing parameter `{}`", p.path)))?;
            if r.shape != p.shape {
                return Err(bad(format!("`{}` has shape {:?}, expected {:?}", p.path, r.shape, p.shape)));
            }
            p.data.copy_from_slice(&r.data);
        }
        Ok(model)
    }
}
