//! Shared framing for the versioned binary files.
//!
//! ```text
//! magic       4 bytes
//! version     u32 LE
//! payload_len u64 LE
//! payload     payload_len bytes
//! crc32       u32 LE (IEEE, over payload)
//! ```

use std::io::{Cursor, Read};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

const HEADER_LEN: usize = 16;

pub(crate) fn frame(magic: &[u8; 4], version: u32, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + HEADER_LEN + 4);
    out.extend_from_slice(magic);
    out.write_u32::<LittleEndian>(version).unwrap();
    out.write_u64::<LittleEndian>(payload.len() as u64).unwrap();
    out.extend_from_slice(payload);
    out.write_u32::<LittleEndian>(crc32fast::hash(payload)).unwrap();
    out
}

/// Checks magic, version, length and checksum; returns the payload.
pub(crate) fn unframe<'a>(magic: &[u8; 4], version: u32, bytes: &'a [u8]) -> Result<&'a [u8]> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(Error::Integrity(format!(
            "bad magic bytes (expected {:?})",
            String::from_utf8_lossy(magic)
        )));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Integrity("truncated header".into()));
    }
    let found = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if found != version {
        return Err(Error::UnsupportedVersion { found, expected: version });
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let end = HEADER_LEN.checked_add(len).and_then(|e| e.checked_add(4));
    if end != Some(bytes.len()) {
        return Err(Error::Integrity(format!(
            "payload length {len} does not match file size {}",
            bytes.len()
        )));
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + len];
    let crc = u32::from_le_bytes(bytes[HEADER_LEN + len..].try_into().unwrap());
    if crc != crc32fast::hash(payload) {
        return Err(Error::Integrity("checksum mismatch".into()));
    }
    Ok(payload)
}

pub(crate) struct Writer(pub Vec<u8>);

impl Writer {
    pub fn new() -> Self {
        Self(Vec::new())
    }
    pub fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    pub fn u64(&mut self, v: u64) {
        self.0.write_u64::<LittleEndian>(v).unwrap();
    }
    pub fn i64(&mut self, v: i64) {
        self.0.write_i64::<LittleEndian>(v).unwrap();
    }
    pub fn f64(&mut self, v: f64) {
        self.0.write_u64::<LittleEndian>(v.to_bits()).unwrap();
    }
    pub fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }
    pub fn f64s(&mut self, v: &[f64]) {
        self.len(v.len());
        for &x in v {
            self.f64(x);
        }
    }
    pub fn usizes(&mut self, v: &[usize]) {
        self.len(v.len());
        for &x in v {
            self.u64(x as u64);
        }
    }
    pub fn opt_f64(&mut self, v: Option<f64>) {
        match v {
            Some(x) => {
                self.u8(1);
                self.f64(x);
            }
            None => self.u8(0),
        }
    }
}

pub(crate) struct Reader<'a>(Cursor<&'a [u8]>);

fn eof(e: std::io::Error) -> Error {
    Error::Integrity(format!("truncated payload: {e}"))
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self(Cursor::new(bytes))
    }
    pub fn u8(&mut self) -> Result<u8> {
        self.0.read_u8().map_err(eof)
    }
    pub fn u64(&mut self) -> Result<u64> {
        self.0.read_u64::<LittleEndian>().map_err(eof)
    }
    pub fn i64(&mut self) -> Result<i64> {
        self.0.read_i64::<LittleEndian>().map_err(eof)
    }
    pub fn f64(&mut self) -> Result<f64> {
        self.u64().map(f64::from_bits)
    }
    /// A length prefix, bounded by the bytes left so corrupt input cannot
    /// trigger huge allocations.
    pub fn len(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        let left = self.0.get_ref().len() as u64 - self.0.position();
        if n.saturating_mul(elem_size.max(1)) as u64 > left {
            return Err(Error::Integrity(format!("length {n} exceeds remaining payload")));
        }
        Ok(n)
    }
    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    pub fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.u64().map(|v| v as usize)).collect()
    }
    pub fn opt_f64(&mut self) -> Result<Option<f64>> {
        match self.u8()? {
            0 => Ok(None),
            1 => self.f64().map(Some),
            t => Err(Error::Integrity(format!("bad option tag {t}"))),
        }
    }
    pub fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0; n];
        self.0.read_exact(&mut buf).map_err(eof)?;
        Ok(buf)
    }
    pub fn finish(self) -> Result<()> {
        if self.0.position() as usize != self.0.get_ref().len() {
            return Err(Error::Integrity("trailing bytes after payload".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip_and_corruption() {
        let bytes = frame(b"TEST", 3, b"hello");
        assert_eq!(unframe(b"TEST", 3, &bytes).unwrap(), b"hello");
        assert!(matches!(
            unframe(b"TEST", 4, &bytes),
            Err(Error::UnsupportedVersion { found: 3, expected: 4 })
        ));
        assert!(matches!(unframe(b"XEST", 3, &bytes), Err(Error::Integrity(_))));
        assert!(matches!(unframe(b"TEST", 3, &bytes[..bytes.len() - 1]), Err(Error::Integrity(_))));
        let mut flipped = bytes.clone();
        flipped[17] ^= 1;
        assert!(matches!(unframe(b"TEST", 3, &flipped), Err(Error::Integrity(_))));
    }
}
