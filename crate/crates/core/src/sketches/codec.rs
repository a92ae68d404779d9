//! Framed binary layout shared by the sketch files and spill files.
//!
//! A frame is a little-endian `u32` payload length followed by the payload.
//! Sketch payloads begin with a version byte. Values are encoded as a tag
//! byte (0 null, 1 int, 2 string) followed by 8 LE bytes or a `u32` length
//! and UTF-8 bytes.

use crate::error::{Error, Result};
use crate::value::Value;

pub const FORMAT_VERSION: u8 = 1;

#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn value(&mut self, v: &Value) {
        match v {
            Value::Null => self.u8(0),
            Value::Int(i) => {
                self.u8(1);
                self.buf.extend_from_slice(&i.to_le_bytes());
            }
            Value::Str(s) => {
                self.u8(2);
                self.u32(s.len() as u32);
                self.buf.extend_from_slice(s.as_bytes());
            }
        }
    }

    /// Wraps the accumulated payload in a length-prefixed frame.
    pub fn into_frame(self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.buf.len() + 4);
        out.extend_from_slice(&(self.buf.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.buf);
        out
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Decoder { buf, pos: 0 }
    }

    /// Opens a length-prefixed frame and returns a decoder over its payload
    /// plus the number of bytes consumed.
    pub fn frame(buf: &'a [u8]) -> Result<(Decoder<'a>, usize)> {
        let mut outer = Decoder::new(buf);
        let len = outer.u32()? as usize;
        let payload = outer.take(len)?;
        Ok((Decoder::new(payload), 4 + len))
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Codec(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    pub fn value(&mut self) -> Result<Value> {
        match self.u8()? {
            0 => Ok(Value::Null),
            1 => Ok(Value::Int(i64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))),
            2 => {
                let len = self.u32()? as usize;
                let raw = self.take(len)?;
                String::from_utf8(raw.to_vec()).map(Value::Str).map_err(|e| Error::Codec(e.to_string()))
            }
            t => Err(Error::Codec(format!("unknown value tag {t}"))),
        }
    }

    pub fn version(&mut self) -> Result<()> {
        match self.u8()? {
            FORMAT_VERSION => Ok(()),
            v => Err(Error::Codec(format!("unsupported format version {v}"))),
        }
    }
}
