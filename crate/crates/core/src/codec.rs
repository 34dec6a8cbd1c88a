//! Versioned little-endian binary containers.
//!
//! Every persisted artifact (network checkpoints, agent checkpoints, replay
//! buffers, activation traces) shares one envelope:
//!
//! ```text
//! offset  size  field
//! 0       4     magic (ASCII, identifies the artifact type)
//! 4       4     format version, u32 LE
//! 8       8     payload length in bytes, u64 LE
//! 16      n     payload
//! 16+n    32    SHA-256 of the payload
//! ```
//!
//! Inside the payload, integers are little-endian, floats are IEEE-754
//! binary64 little-endian, strings are a u32 byte length followed by UTF-8,
//! and float arrays are a u64 element count followed by the elements.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const HEADER_LEN: usize = 16;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
        self
    }

    pub fn f64s(&mut self, xs: &[f64]) -> &mut Self {
        self.u64(xs.len() as u64);
        for &x in xs {
            self.f64(x);
        }
        self
    }

    /// Length-prefixed opaque blob (u64 length).
    pub fn blob(&mut self, bytes: &[u8]) -> &mut Self {
        self.u64(bytes.len() as u64);
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    /// Wraps the payload in the envelope.
    pub fn finish(self, magic: &[u8; 4], version: u32) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.buf.len() + CHECKSUM_LEN);
        out.extend_from_slice(magic);
        out.extend_from_slice(&version.to_le_bytes());
        out.extend_from_slice(&(self.buf.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.buf);
        out.extend_from_slice(&Sha256::digest(&self.buf));
        out
    }
}

/// Cursor over a validated payload.
#[derive(Debug)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    /// Validates the envelope and returns a reader over the payload plus the
    /// stored format version.
    pub fn open(
        bytes: &'a [u8],
        magic: &[u8; 4],
        supported: u32,
        what: &'static str,
    ) -> Result<(Self, u32)> {
        if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
            return Err(Error::Corrupt(format!("{what}: truncated header")));
        }
        if &bytes[..4] != magic {
            return Err(Error::Corrupt(format!("{what}: bad magic")));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version == 0 || version > supported {
            return Err(Error::Version { found: version, supported });
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() != HEADER_LEN + len + CHECKSUM_LEN {
            return Err(Error::Corrupt(format!(
                "{what}: length field says {len} payload bytes, container holds {}",
                bytes.len().saturating_sub(HEADER_LEN + CHECKSUM_LEN)
            )));
        }
        let payload = &bytes[HEADER_LEN..HEADER_LEN + len];
        if Sha256::digest(payload).as_slice() != &bytes[HEADER_LEN + len..] {
            return Err(Error::Corrupt(format!("{what}: checksum mismatch")));
        }
        Ok((Self { buf: payload, pos: 0, what }, version))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Corrupt(format!("{}: unexpected end of payload", self.what)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Corrupt(format!("{}: invalid utf-8", self.what)))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len_prefix(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn blob(&mut self) -> Result<&'a [u8]> {
        let n = self.len_prefix(1)?;
        self.take(n)
    }

    pub fn raw(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    /// Reads a u64 count and checks that `count * elem_size` bytes remain.
    pub fn len_prefix(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.checked_mul(elem_size).map_or(true, |b| b > self.buf.len() - self.pos) {
            return Err(Error::Corrupt(format!("{}: array length {n} exceeds payload", self.what)));
        }
        Ok(n)
    }

    /// Fails unless the whole payload has been consumed.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Corrupt(format!(
                "{}: {} trailing bytes",
                self.what,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// SHA-256 digest used to bind artifacts to one another.
pub fn digest(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}
