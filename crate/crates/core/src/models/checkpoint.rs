//! Binary checkpoint format.
//!
//! All integers are little-endian `u32`, all values little-endian `f64`:
//!
//! ```text
//! magic  b"FVFLCKPT"   version
//! unified width   m   protected width × m
//! block count
//! per block: name length, UTF-8 name, rows, cols, bias length,
//!            rows·cols weights (row-major), bias values
//! ```

use std::fs;
use std::path::Path;

use super::{ModelBundle, RepWidths};
use crate::nn::{Module, Tensor};
use crate::rng::fnv1a;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"FVFLCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointBlock {
    pub name: String,
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub widths: RepWidths,
    pub blocks: Vec<CheckpointBlock>,
}

impl Checkpoint {
    pub fn capture(bundle: &ModelBundle) -> Self {
        let mut blocks = Vec::new();
        bundle.visit(&mut |p| {
            blocks.push(CheckpointBlock {
                name: p.name.clone(),
                weights: p.weights.clone(),
                bias: p.bias.clone(),
            })
        });
        Self {
            widths: bundle.widths().clone(),
            blocks,
        }
    }

    pub fn restore(&self, bundle: &mut ModelBundle) -> Result<()> {
        if &self.widths != bundle.widths() {
            return Err(Error::Checkpoint(format!(
                "width mismatch: checkpoint {:?}, model {:?}",
                self.widths,
                bundle.widths()
            )));
        }
        let mut count = 0;
        bundle.visit(&mut |_| count += 1);
        if count != self.blocks.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} blocks, model has {count}",
                self.blocks.len()
            )));
        }
        let mut err = None;
        let mut it = self.blocks.iter();
        bundle.visit_mut(&mut |p| {
            let b = it.next().expect("counted above");
            if err.is_some() {
                return;
            }
            if b.name != p.name || b.weights.shape() != p.weights.shape() || b.bias.len() != p.bias.len() {
                err = Some(Error::Checkpoint(format!(
                    "block `{}` {} does not match model block `{}` {}",
                    b.name,
                    b.weights.shape_str(),
                    p.name,
                    p.weights.shape_str()
                )));
                return;
            }
            p.weights = b.weights.clone();
            p.bias = b.bias.clone();
        });
        err.map_or(Ok(()), Err)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, self.widths.unified as u32);
        put_u32(&mut out, self.widths.protected.len() as u32);
        for &h in &self.widths.protected {
            put_u32(&mut out, h as u32);
        }
        put_u32(&mut out, self.blocks.len() as u32);
        for b in &self.blocks {
            put_u32(&mut out, b.name.len() as u32);
            out.extend_from_slice(b.name.as_bytes());
            put_u32(&mut out, b.weights.rows() as u32);
            put_u32(&mut out, b.weights.cols() as u32);
            put_u32(&mut out, b.bias.len() as u32);
            for v in b.weights.data().iter().chain(&b.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let unified = r.u32()? as usize;
        let m = r.u32()? as usize;
        let protected = (0..m).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
        let count = r.u32()? as usize;
        let mut blocks = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Checkpoint("block name is not UTF-8".into()))?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let nb = r.u32()? as usize;
            let weights = Tensor::from_vec(rows, cols, r.f64s(rows * cols)?)?;
            let bias = r.f64s(nb)?;
            blocks.push(CheckpointBlock { name, weights, bias });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            widths: RepWidths { unified, protected },
            blocks,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// FNV-1a of the serialized image.
    pub fn digest(&self) -> u64 {
        fnv1a(&self.to_bytes())
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
