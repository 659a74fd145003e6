//! Binary filter cache (`AIPW`).
//!
//! All integers and floats are little-endian:
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0 | 4 | magic `AIPW` |
//! | 4 | 2 | format version (u16, currently 1) |
//! | 6 | 2 | flags (u16): bit 0 set = sparse storage, other bits zero |
//! | 8 | 8 | `n` (u64) |
//! | 16 | 8 | balance residual (f64) |
//! | 24 | … | entries |
//!
//! Dense entries are `n·n` f64 values in row-major order. Sparse entries are,
//! for each row in order, a u64 count followed by that many
//! `(column u64, value f64)` pairs with increasing columns.

use std::fs;
use std::path::Path;

use super::{SmoothingFilter, Weights};
use crate::error::{Error, Result};

pub const FILTER_MAGIC: &[u8; 4] = b"AIPW";
pub const FILTER_VERSION: u16 = 1;
const FLAG_SPARSE: u16 = 1;

pub fn encode_filter(w: &SmoothingFilter) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * w.weights.nnz() * if w.is_dense() { 1 } else { 2 });
    out.extend_from_slice(FILTER_MAGIC);
    out.extend_from_slice(&FILTER_VERSION.to_le_bytes());
    let flags = if w.is_dense() { 0 } else { FLAG_SPARSE };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&(w.n as u64).to_le_bytes());
    out.extend_from_slice(&w.balance_residual.to_le_bytes());
    match &w.weights {
        Weights::Dense { data, .. } => {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Weights::Sparse {
            n,
            row_ptr,
            cols,
            vals,
        } => {
            for i in 0..*n {
                let r = row_ptr[i]..row_ptr[i + 1];
                out.extend_from_slice(&(r.len() as u64).to_le_bytes());
                for k in r {
                    out.extend_from_slice(&(cols[k] as u64).to_le_bytes());
                    out.extend_from_slice(&vals[k].to_le_bytes());
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, len: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::parse(self.pos, format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses an `AIPW` cache. The stored residual is kept as written; symmetry
/// and nonnegativity are re-checked.
pub fn decode_filter(bytes: &[u8]) -> Result<SmoothingFilter> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != FILTER_MAGIC {
        return Err(Error::parse(0, "missing AIPW magic"));
    }
    let version = r.u16("version")?;
    if version != FILTER_VERSION {
        return Err(Error::parse(4, format!("unsupported filter cache version {version}")));
    }
    let flags = r.u16("flags")?;
    if flags & !FLAG_SPARSE != 0 {
        return Err(Error::parse(6, format!("unknown flag bits 0x{flags:04x}")));
    }
    let n = r.u64("n")? as usize;
    let residual = r.f64("balance residual")?;
    let weights = if flags & FLAG_SPARSE == 0 {
        let count = n
            .checked_mul(n)
            .filter(|c| c.checked_mul(8).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| Error::parse(8, format!("n={n} inconsistent with file size")))?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(r.f64("dense entry")?);
        }
        Weights::Dense { n, data }
    } else {
        if n > bytes.len() {
            return Err(Error::parse(8, format!("n={n} inconsistent with file size")));
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for _ in 0..n {
            let at = r.pos;
            let count = r.u64("row count")? as usize;
            if count > n {
                return Err(Error::parse(at, format!("row count {count} exceeds n={n}")));
            }
            for _ in 0..count {
                cols.push(r.u64("column index")? as usize);
                vals.push(r.f64("sparse entry")?);
            }
            row_ptr.push(cols.len());
        }
        Weights::Sparse {
            n,
            row_ptr,
            cols,
            vals,
        }
    };
    if r.pos != bytes.len() {
        return Err(Error::parse(r.pos, "trailing bytes after filter entries"));
    }
    let mut w = SmoothingFilter::from_weights(weights)?;
    w.balance_residual = residual;
    Ok(w)
}

pub fn save_filter(w: &SmoothingFilter, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_filter(w))?;
    Ok(())
}

pub fn load_filter(path: impl AsRef<Path>) -> Result<SmoothingFilter> {
    decode_filter(&fs::read(path)?)
}
