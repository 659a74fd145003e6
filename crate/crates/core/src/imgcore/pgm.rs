//! Netpbm graymap I/O: P2 (ASCII) and P5 (binary) in, P5 maxval 255 out.

use std::fs;
use std::io;
use std::path::Path;

use super::{Image, SamplingMask};
use crate::error::{Error, Result};

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = fs::read(path)?;
    decode_pgm(&bytes)
}

pub fn save_pgm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

/// Quantises `round(255 · clamp(p, 0, 1))` into a P5 file.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(
        img.data()
            .iter()
            .map(|&p| (255.0 * p.clamp(0.0, 1.0)).round() as u8),
    );
    out
}

/// Masks are stored as P5 with kept pixels at 255 and missing pixels at 0.
pub fn save_mask(mask: &SamplingMask, path: impl AsRef<Path>) -> Result<()> {
    save_pgm(&mask.to_image(), path)
}

/// Pixels at or above half of maxval are kept.
pub fn load_mask(path: impl AsRef<Path>) -> Result<SamplingMask> {
    let img = load_pgm(path)?;
    let keep = img.data().iter().map(|&v| v >= 0.5).collect();
    SamplingMask::from_keep(img.width(), img.height(), keep)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Reads an unsigned decimal token. `what` names the field for errors.
    fn number(&mut self, what: &str) -> Result<u64> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            if self.pos >= self.bytes.len() {
                return Err(Error::parse(start, format!("unexpected end of header reading {what}")));
            }
            return Err(Error::parse(
                start,
                format!("expected digits for {what}, found byte 0x{:02x}", self.bytes[start]),
            ));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(start, format!("{what} out of range")))
    }
}

fn truncated(expected: usize, got: usize) -> Error {
    Error::Io(io::Error::new(
        io::ErrorKind::UnexpectedEof,
        format!("PGM payload truncated: expected {expected} samples, found {got}"),
    ))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 {
        return Err(Error::parse(0, "file too short for a PGM magic number"));
    }
    let binary = match &bytes[..2] {
        b"P5" => true,
        b"P2" => false,
        _ => return Err(Error::parse(0, "expected magic P2 or P5")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval_at = {
        cur.skip_space_and_comments();
        cur.pos
    };
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(maxval_at, format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::parse(2, "image dimensions overflow"))?;
    let scale = maxval as f64;
    let mut data = Vec::with_capacity(n);

    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            Some(_) => return Err(Error::parse(cur.pos, "expected whitespace after maxval")),
            None => return Err(truncated(n, 0)),
        }
        let wide = maxval > 255;
        let sample_bytes = if wide { 2 } else { 1 };
        let payload = &bytes[cur.pos..];
        if payload.len() < n * sample_bytes {
            return Err(truncated(n, payload.len() / sample_bytes));
        }
        for i in 0..n {
            let v = if wide {
                u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]]) as u64
            } else {
                payload[i] as u64
            };
            if v > maxval {
                return Err(Error::parse(
                    cur.pos + i * sample_bytes,
                    format!("sample {v} exceeds maxval {maxval}"),
                ));
            }
            data.push(v as f64 / scale);
        }
    } else {
        for i in 0..n {
            cur.skip_space_and_comments();
            if cur.pos >= bytes.len() {
                return Err(truncated(n, i));
            }
            let at = cur.pos;
            let v = cur.number("sample")?;
            if v > maxval {
                return Err(Error::parse(at, format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 / scale);
        }
    }
    Image::new(width, height, data)
}
