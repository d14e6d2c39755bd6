//! Little-endian byte helpers and the sectioned model container.
//!
//! Container layout: `"TBMK"`, version (u16 LE), reserved u16, section
//! count (u32 LE), then per section: 4-byte tag, payload length (u64 LE),
//! SHA-256 of the payload (32 bytes), payload.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CONTAINER_MAGIC: [u8; 4] = *b"TBMK";
pub const CONTAINER_VERSION: u16 = 1;

#[derive(Debug, Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32_slice(&mut self, v: &[f32]) {
        self.buf.reserve(v.len() * 4);
        for x in v {
            self.f32(*x);
        }
    }

    pub fn f64_slice(&mut self, v: &[f64]) {
        self.buf.reserve(v.len() * 8);
        for x in v {
            self.f64(*x);
        }
    }

    /// Length-prefixed (u16) UTF-8 string.
    pub fn str16(&mut self, s: &str) -> Result<()> {
        let len = u16::try_from(s.len())
            .map_err(|_| Error::InvalidArgument(format!("string too long: {} bytes", s.len())))?;
        self.u16(len);
        self.bytes(s.as_bytes());
        Ok(())
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated(format!(
                "needed {n} bytes at offset {}, {} available",
                self.pos,
                self.remaining()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn magic(&mut self) -> Result<[u8; 4]> {
        self.array()
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Malformed("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Malformed("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    pub fn str16(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|e| Error::Malformed(format!("invalid UTF-8: {e}")))
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Malformed(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

/// A tagged payload of the model container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub tag: [u8; 4],
    pub payload: Vec<u8>,
}

impl Section {
    pub fn new(tag: [u8; 4], payload: Vec<u8>) -> Self {
        Self { tag, payload }
    }

    pub fn tag_str(&self) -> String {
        String::from_utf8_lossy(&self.tag).trim_end_matches('\0').to_string()
    }
}

/// Pads a short tag ("GMM") to four bytes with NULs.
pub fn tag(name: &str) -> [u8; 4] {
    let mut t = [0u8; 4];
    for (dst, src) in t.iter_mut().zip(name.bytes()) {
        *dst = src;
    }
    t
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Container {
    pub sections: Vec<Section>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, section: Section) {
        self.sections.push(section);
    }

    pub fn get(&self, name: &str) -> Option<&Section> {
        let t = tag(name);
        self.sections.iter().find(|s| s.tag == t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(&CONTAINER_MAGIC);
        w.u16(CONTAINER_VERSION);
        w.u16(0);
        w.u32(self.sections.len() as u32);
        for s in &self.sections {
            w.bytes(&s.tag);
            w.u64(s.payload.len() as u64);
            w.bytes(&Sha256::digest(&s.payload));
            w.bytes(&s.payload);
        }
        w.into_inner()
    }

    /// Parses and verifies every section checksum.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.magic()?;
        if magic != CONTAINER_MAGIC {
            return Err(Error::BadMagic { expected: CONTAINER_MAGIC, found: magic });
        }
        let version = r.u16()?;
        if version != CONTAINER_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let _reserved = r.u16()?;
        let count = r.u32()? as usize;
        let mut sections = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let t: [u8; 4] = r.magic()?;
            let len = usize::try_from(r.u64()?).map_err(|_| Error::Malformed("section too large".into()))?;
            let digest = r.take(32)?;
            let payload = r.take(len)?.to_vec();
            let section = Section::new(t, payload);
            if Sha256::digest(&section.payload).as_slice() != digest {
                return Err(Error::Checksum(section.tag_str()));
            }
            sections.push(section);
        }
        r.expect_end()?;
        Ok(Self { sections })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip_and_checksum() {
        let mut c = Container::new();
        c.push(Section::new(tag("GMM"), vec![1, 2, 3]));
        c.push(Section::new(tag("SVM"), vec![]));
        let bytes = c.to_bytes();
        assert_eq!(Container::from_bytes(&bytes).unwrap(), c);

        let mut corrupt = bytes.clone();
        let last = corrupt.len() - 1;
        // last payload byte of the GMM section sits before the SVM header
        corrupt[last - 44] ^= 0xff;
        assert!(matches!(Container::from_bytes(&corrupt), Err(Error::Checksum(_))));
        assert!(matches!(Container::from_bytes(&bytes[..bytes.len() - 5]), Err(Error::Truncated(_))));
    }

    #[test]
    fn reader_reports_truncation() {
        let mut r = ByteReader::new(&[1, 2]);
        assert!(matches!(r.u32(), Err(Error::Truncated(_))));
    }
}
