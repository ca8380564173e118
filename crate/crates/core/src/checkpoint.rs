//! Flat little-endian tensor files.
//!
//! Layout: 8-byte magic, `u32` version, `u32` kind length + kind bytes,
//! `u32` tensor count, then per tensor `u32` rows, `u32` cols and
//! `rows * cols` `f64` values in row-major order. An optional trailing `u64`
//! carries a step counter.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RRCKPT\0\x01";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data does not match its shape");
        Self { rows, cols, data }
    }

    pub fn row(data: Vec<f64>) -> Self {
        Self { rows: 1, cols: data.len(), data }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// What the tensors describe, e.g. `uodm` or `planner`.
    pub kind: String,
    pub tensors: Vec<Tensor>,
    pub step: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.kind.len() as u32).to_le_bytes());
        out.extend_from_slice(self.kind.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.rows as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols as u32).to_le_bytes());
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut magic = [0u8; 8];
        bytes.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = read_u32(&mut bytes)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let klen = read_u32(&mut bytes)? as usize;
        if klen > bytes.len() {
            return Err(bad("truncated kind"));
        }
        let kind = String::from_utf8(bytes[..klen].to_vec()).map_err(|_| bad("kind is not utf-8"))?;
        bytes = &bytes[klen..];
        let count = read_u32(&mut bytes)? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let rows = read_u32(&mut bytes)? as usize;
            let cols = read_u32(&mut bytes)? as usize;
            let n = rows.checked_mul(cols).ok_or_else(|| bad("tensor too large"))?;
            if n.saturating_mul(8) > bytes.len() {
                return Err(bad("truncated tensor"));
            }
            let data = bytes[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            bytes = &bytes[n * 8..];
            tensors.push(Tensor { rows, cols, data });
        }
        let mut step = [0u8; 8];
        bytes.read_exact(&mut step).map_err(|_| bad("missing step counter"))?;
        if !bytes.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { kind, tensors, step: u64::from_le_bytes(step) })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Loads and checks the kind tag.
    pub fn load_kind(path: impl AsRef<Path>, kind: &str) -> Result<Self> {
        let c = Self::load(path)?;
        if c.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {}", c.kind)));
        }
        Ok(c)
    }
}

fn read_u32(bytes: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    bytes.read_exact(&mut b).map_err(|_| Error::Checkpoint("truncated".into()))?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip_exactly() {
        let c = Checkpoint {
            kind: "test".into(),
            tensors: vec![Tensor::new(2, 2, vec![1.0, -0.5, f64::MIN_POSITIVE, 1e300]), Tensor::row(vec![3.25])],
            step: 42,
        };
        let b = c.to_bytes();
        assert_eq!(Checkpoint::from_bytes(&b).unwrap(), c);
        assert!(Checkpoint::from_bytes(&b[..b.len() - 1]).is_err());
        let mut wrong = b.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong).is_err());
    }
}
