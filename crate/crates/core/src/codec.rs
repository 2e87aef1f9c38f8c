//! Canonical binary encoding for everything that gets hashed or sent over the wire.
//!
//! Rules:
//! - unsigned integer: 8 bytes big-endian
//! - byte sequence / text: 8-byte big-endian byte length, then the raw bytes
//! - list: 8-byte big-endian element count, then each element in order
//! - record: the field encodings in declared order, no tags and no padding
//!
//! The encoding carries no type tags, so it is injective only within a fixed
//! schema. Every hashed structure in this crate has a fixed schema.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("integer does not fit in 64 unsigned bits")]
    IntegerOverflow,
    #[error("input truncated: needed {needed} bytes, {remaining} remaining")]
    Truncated { needed: u64, remaining: usize },
    #[error("text is not valid UTF-8")]
    InvalidUtf8,
    #[error("expected {expected} bytes, found {found}")]
    BadLength { expected: usize, found: u64 },
    #[error("{0} trailing bytes after value")]
    TrailingBytes(usize),
    #[error("invalid value: {0}")]
    Invalid(String),
}

/// Dynamically typed canonical value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    U64(u64),
    Bytes(Vec<u8>),
    Text(String),
    List(Vec<Value>),
    Record(Vec<Value>),
}

/// Encodes a dynamically typed value.
pub fn encode_canonical(value: &Value) -> Result<Vec<u8>, CodecError> {
    let mut enc = Encoder::new();
    encode_value(&mut enc, value)?;
    Ok(enc.finish())
}

fn len_u64(len: usize) -> Result<u64, CodecError> {
    u64::try_from(len).map_err(|_| CodecError::IntegerOverflow)
}

fn encode_value(enc: &mut Encoder, value: &Value) -> Result<(), CodecError> {
    match value {
        Value::U64(v) => {
            enc.u64(*v);
        }
        Value::Bytes(b) => {
            len_u64(b.len())?;
            enc.bytes(b);
        }
        Value::Text(s) => {
            len_u64(s.len())?;
            enc.text(s);
        }
        Value::List(items) => {
            enc.u64(len_u64(items.len())?);
            for item in items {
                encode_value(enc, item)?;
            }
        }
        Value::Record(fields) => {
            for field in fields {
                encode_value(enc, field)?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u64(u64::from(v))
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.u64(b.len() as u64);
        self.buf.extend_from_slice(b);
        self
    }

    pub fn text(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn list<T: Canonical>(&mut self, items: &[T]) -> &mut Self {
        self.u64(items.len() as u64);
        for item in items {
            item.encode(self);
        }
        self
    }

    /// Optional values are lists of zero or one element.
    pub fn option<T: Canonical>(&mut self, v: Option<&T>) -> &mut Self {
        match v {
            None => self.u64(0),
            Some(inner) => {
                self.u64(1);
                inner.encode(self);
                self
            }
        }
    }

    pub fn put<T: Canonical + ?Sized>(&mut self, v: &T) -> &mut Self {
        v.encode(self);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Decoder<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Self { input, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.input.len() - self.pos
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    fn take(&mut self, n: u64) -> Result<&'a [u8], CodecError> {
        let remaining = self.remaining();
        if n > remaining as u64 {
            return Err(CodecError::Truncated { needed: n, remaining });
        }
        let n = n as usize;
        let out = &self.input[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        let raw = self.take(8)?;
        let mut buf = [0u8; 8];
        buf.copy_from_slice(raw);
        Ok(u64::from_be_bytes(buf))
    }

    pub fn bool(&mut self) -> Result<bool, CodecError> {
        match self.u64()? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(CodecError::Invalid(format!("boolean out of range: {other}"))),
        }
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, CodecError> {
        let len = self.u64()?;
        Ok(self.take(len)?.to_vec())
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let len = self.u64()?;
        if len != N as u64 {
            return Err(CodecError::BadLength { expected: N, found: len });
        }
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(len)?);
        Ok(out)
    }

    pub fn text(&mut self) -> Result<String, CodecError> {
        let len = self.u64()?;
        let raw = self.take(len)?;
        std::str::from_utf8(raw)
            .map(str::to_owned)
            .map_err(|_| CodecError::InvalidUtf8)
    }

    pub fn usize(&mut self) -> Result<usize, CodecError> {
        usize::try_from(self.u64()?).map_err(|_| CodecError::IntegerOverflow)
    }

    pub fn list<T: Canonical>(&mut self) -> Result<Vec<T>, CodecError> {
        let count = self.u64()?;
        // every element occupies at least one byte, except zero-field records which we never use
        if count > self.remaining() as u64 {
            return Err(CodecError::Truncated { needed: count, remaining: self.remaining() });
        }
        let mut out = Vec::with_capacity(count as usize);
        for _ in 0..count {
            out.push(T::decode(self)?);
        }
        Ok(out)
    }

    pub fn option<T: Canonical>(&mut self) -> Result<Option<T>, CodecError> {
        match self.u64()? {
            0 => Ok(None),
            1 => Ok(Some(T::decode(self)?)),
            other => Err(CodecError::Invalid(format!("option count {other}"))),
        }
    }

    pub fn get<T: Canonical>(&mut self) -> Result<T, CodecError> {
        T::decode(self)
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }
}

/// A type with a fixed canonical schema.
pub trait Canonical: Sized {
    fn encode(&self, enc: &mut Encoder);
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError>;

    fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    /// Decodes a value that must span the whole input.
    fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut dec = Decoder::new(bytes);
        let v = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(v)
    }
}

impl Canonical for u64 {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(*self);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        dec.u64()
    }
}

impl Canonical for String {
    fn encode(&self, enc: &mut Encoder) {
        enc.text(self);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        dec.text()
    }
}

impl<T: Canonical> Canonical for Vec<T> {
    fn encode(&self, enc: &mut Encoder) {
        enc.list(self);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        dec.list()
    }
}
