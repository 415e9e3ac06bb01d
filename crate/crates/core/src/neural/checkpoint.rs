//! Binary checkpoint files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "SSGN"  u32 version  u64 step
//! u32 count, then per parameter: u32 name_len, name, u32 ndim, u64 dims.., f64 values..
//! f64 base_lr  u64 adam_step  u32 n_milestones  u64 milestones..
//! per parameter: f64 first moments.., f64 second moments..
//! u64 metadata_len, UTF-8 metadata
//! ```

use std::path::Path;

use super::adam::AdamState;
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Result, SsgnError};

pub const MAGIC: &[u8; 4] = b"SSGN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub params: ParamStore,
    pub adam: AdamState,
    /// Free-form text stored after the optimizer state (run config as JSON).
    pub metadata: String,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.params.num_values() * 24);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for d in t.shape() {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            put_f64s(&mut out, t.data());
        }
        out.extend_from_slice(&self.adam.base_lr.to_le_bytes());
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        out.extend_from_slice(&(self.adam.milestones.len() as u32).to_le_bytes());
        for m in &self.adam.milestones {
            out.extend_from_slice(&m.to_le_bytes());
        }
        for (m, v) in self.adam.m.iter().zip(&self.adam.v) {
            put_f64s(&mut out, m.data());
            put_f64s(&mut out, v.data());
        }
        out.extend_from_slice(&(self.metadata.len() as u64).to_le_bytes());
        out.extend_from_slice(self.metadata.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(SsgnError::format("magic", "not a checkpoint file"));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(SsgnError::format(
                "version",
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let step = r.u64("step")?;
        let count = r.u32("parameter count")? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let len = r.u32("parameter name")? as usize;
            let name = std::str::from_utf8(r.take(len, "parameter name")?)
                .map_err(|_| SsgnError::format("parameter name", "invalid UTF-8"))?
                .to_string();
            if params.id(&name).is_some() {
                return Err(SsgnError::format(
                    "parameter name",
                    format!("duplicate {name}"),
                ));
            }
            let ndim = r.u32(&name)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64(&name)? as usize);
            }
            let n = shape.iter().try_fold(1usize, |a, d| a.checked_mul(*d));
            let n = n.ok_or_else(|| SsgnError::format(&name, "shape overflows"))?;
            let data = r.f64s(n, &name)?;
            params.add(name, Tensor::new(shape, data));
        }
        let base_lr = r.f64("base_lr")?;
        let mut adam = AdamState::new(&params, base_lr, Vec::new());
        adam.step = r.u64("optimizer step")?;
        let nm = r.u32("milestones")? as usize;
        for _ in 0..nm {
            adam.milestones.push(r.u64("milestones")?);
        }
        for (i, (name, t)) in params.iter().enumerate() {
            let field = format!("moments of {name}");
            adam.m[i] = Tensor::new(t.shape().to_vec(), r.f64s(t.len(), &field)?);
            adam.v[i] = Tensor::new(t.shape().to_vec(), r.f64s(t.len(), &field)?);
        }
        let len = r.u64("metadata")? as usize;
        let metadata = std::str::from_utf8(r.take(len, "metadata")?)
            .map_err(|_| SsgnError::format("metadata", "invalid UTF-8"))?
            .to_string();
        if r.pos != bytes.len() {
            return Err(SsgnError::format(
                "metadata",
                "trailing bytes after checkpoint",
            ));
        }
        Ok(Checkpoint {
            step,
            params,
            adam,
            metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| SsgnError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| SsgnError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| SsgnError::format(field, "checkpoint truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, field: &str) -> Result<Vec<f64>> {
        let raw = self.take(n.saturating_mul(8), field)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
