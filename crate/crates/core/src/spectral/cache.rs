//! Binary spectral cache (`AIPS`), little-endian:
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0 | 4 | magic `AIPS` |
//! | 4 | 2 | format version (u16, currently 1) |
//! | 6 | 8 | `n` (u64) |
//! | 14 | 8 | `m` (u64) |
//! | 22 | 8 | truncation threshold (f64) |
//! | 30 | 8·m | eigenvalues, descending |
//! | 30+8m | 8·n·m | eigenvectors, column-major `n × m` |

use std::fs;
use std::path::Path;

use faer::Mat;

use super::SpectralFilter;
use crate::error::{Error, Result};

pub const SPECTRAL_MAGIC: &[u8; 4] = b"AIPS";
pub const SPECTRAL_VERSION: u16 = 1;
const HEADER_LEN: usize = 30;

pub fn encode_spectral(f: &SpectralFilter) -> Vec<u8> {
    let (n, m) = (f.n(), f.m());
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m * (n + 1));
    out.extend_from_slice(SPECTRAL_MAGIC);
    out.extend_from_slice(&SPECTRAL_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(m as u64).to_le_bytes());
    out.extend_from_slice(&f.trunc_tol().to_le_bytes());
    for s in f.eigvals() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    let u = f.eigvecs();
    for k in 0..m {
        for i in 0..n {
            out.extend_from_slice(&u[(i, k)].to_le_bytes());
        }
    }
    out
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

fn u64_at(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

pub fn decode_spectral(bytes: &[u8]) -> Result<SpectralFilter> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse(bytes.len(), "truncated AIPS header"));
    }
    if &bytes[0..4] != SPECTRAL_MAGIC {
        return Err(Error::parse(0, "missing AIPS magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SPECTRAL_VERSION {
        return Err(Error::parse(4, format!("unsupported spectral cache version {version}")));
    }
    let n = u64_at(bytes, 6) as usize;
    let m = u64_at(bytes, 14) as usize;
    let trunc_tol = f64_at(bytes, 22);
    if m > n {
        return Err(Error::parse(14, format!("rank m={m} exceeds n={n}")));
    }
    let expected = n
        .checked_add(1)
        .and_then(|k| k.checked_mul(m))
        .and_then(|k| k.checked_mul(8))
        .and_then(|k| k.checked_add(HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(Error::parse(
            6,
            format!("file size {} does not match n={n}, m={m}", bytes.len()),
        ));
    }
    let eigvals = (0..m).map(|k| f64_at(bytes, HEADER_LEN + 8 * k)).collect();
    let base = HEADER_LEN + 8 * m;
    let eigvecs = Mat::from_fn(n, m, |i, k| f64_at(bytes, base + 8 * (k * n + i)));
    SpectralFilter::from_parts(eigvals, eigvecs, trunc_tol)
}

pub fn save_spectral(f: &SpectralFilter, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_spectral(f))?;
    Ok(())
}

pub fn load_spectral(path: impl AsRef<Path>) -> Result<SpectralFilter> {
    decode_spectral(&fs::read(path)?)
}
