//! Little-endian binary framing shared by the EMBD, EMBP and FEMW files.
//!
//! Every file ends with a 64-bit checksum: the first eight bytes of the
//! SHA-256 digest of all preceding bytes, read as a little-endian `u64`.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn checksum(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            buf: Vec::with_capacity(n),
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, vs: impl IntoIterator<Item = f32>) {
        for v in vs {
            self.f32(v);
        }
    }

    /// Append the checksum and return the finished buffer.
    pub fn finish(mut self) -> Vec<u8> {
        let c = checksum(&self.buf);
        self.buf.extend_from_slice(&c.to_le_bytes());
        self.buf
    }
}

/// Cursor over a complete file image.
pub struct ByteReader<'a> {
    format: &'static str,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(format: &'static str, buf: &'a [u8]) -> Self {
        Self {
            format,
            buf,
            pos: 0,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated {
                format: self.format,
                detail: format!(
                    "need {n} bytes at offset {}, {} left",
                    self.pos,
                    self.buf.len() - self.pos
                ),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let m = self.take(4)?;
        if m != expected {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(m).into_owned(),
            });
        }
        Ok(())
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| self.malformed("length overflow"))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Confirm that exactly `body` more bytes plus the checksum remain, then
    /// verify the checksum over everything before it.
    pub fn expect_remaining_and_verify(&self, body: usize) -> Result<()> {
        let need = body
            .checked_add(8)
            .ok_or_else(|| self.malformed("length overflow"))?;
        let left = self.buf.len() - self.pos;
        if left < need {
            return Err(Error::Truncated {
                format: self.format,
                detail: format!("header declares {need} more bytes, {left} present"),
            });
        }
        if left > need {
            return Err(self.malformed(&format!("{} trailing bytes", left - need)));
        }
        let split = self.buf.len() - 8;
        let stored = u64::from_le_bytes(self.buf[split..].try_into().unwrap());
        let computed = checksum(&self.buf[..split]);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        Ok(())
    }

    pub fn malformed(&self, detail: &str) -> Error {
        Error::Malformed {
            format: self.format,
            detail: detail.to_string(),
        }
    }
}
