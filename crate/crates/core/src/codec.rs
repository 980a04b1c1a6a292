//! Canonical tag-length-value encoding.
//!
//! Every signed or hashed structure is encoded the same way so that any
//! implementation can reproduce the exact bytes:
//!
//! * a struct is a run of fields `[tag: u8][len: u32 BE][value]`, tags strictly
//!   ascending, optional fields omitted when absent;
//! * byte strings and UTF-8 strings are their raw bytes;
//! * `u8` enums are one byte, `u64` is eight bytes big-endian;
//! * a list is a run of `[len: u32 BE][element]`;
//! * a byte map is a run of `[klen][key][vlen][value]`, keys strictly ascending.
//!
//! Decoding is strict: out-of-order or unknown tags, trailing bytes and
//! non-ascending map keys are rejected, so encode/decode is a bijection.

use std::collections::BTreeMap;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// 32-byte SHA-256 digest.
pub type Digest = [u8; 32];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("truncated input")]
    Truncated,
    #[error("unexpected field tag {found} (expected {expected})")]
    UnexpectedTag { expected: u8, found: u8 },
    #[error("missing field tag {0}")]
    MissingField(u8),
    #[error("trailing bytes after value")]
    TrailingBytes,
    #[error("field has wrong length: expected {expected}, got {found}")]
    BadLength { expected: usize, found: usize },
    #[error("invalid utf-8 string")]
    InvalidUtf8,
    #[error("invalid enum value {0}")]
    InvalidEnum(u8),
    #[error("map keys not strictly ascending")]
    UnsortedKeys,
    #[error("{0}")]
    Invalid(&'static str),
}

/// Types with a canonical byte encoding.
pub trait Canonical: Sized {
    fn encode_into(&self, out: &mut Vec<u8>);
    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError>;

    fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        Self::decode_from(bytes)
    }
}

/// SHA-256 over the canonical encoding.
pub fn canonical_digest<T: Canonical>(value: &T) -> Digest {
    sha256(&value.to_canonical_bytes())
}

pub fn sha256(bytes: &[u8]) -> Digest {
    Sha256::digest(bytes).into()
}

fn put_len(out: &mut Vec<u8>, len: usize) {
    let len = u32::try_from(len).expect("canonical value exceeds u32 length");
    out.extend_from_slice(&len.to_be_bytes());
}

/// Builder for struct encodings. Callers must add fields in ascending tag order.
pub struct StructWriter<'a> {
    out: &'a mut Vec<u8>,
    last_tag: Option<u8>,
}

impl<'a> StructWriter<'a> {
    pub fn new(out: &'a mut Vec<u8>) -> Self {
        Self { out, last_tag: None }
    }

    pub fn raw(&mut self, tag: u8, value: &[u8]) -> &mut Self {
        debug_assert!(self.last_tag.map_or(true, |t| t < tag), "tags out of order");
        self.last_tag = Some(tag);
        self.out.push(tag);
        put_len(self.out, value.len());
        self.out.extend_from_slice(value);
        self
    }

    pub fn str(&mut self, tag: u8, value: &str) -> &mut Self {
        self.raw(tag, value.as_bytes())
    }

    pub fn u8(&mut self, tag: u8, value: u8) -> &mut Self {
        self.raw(tag, &[value])
    }

    pub fn u64(&mut self, tag: u8, value: u64) -> &mut Self {
        self.raw(tag, &value.to_be_bytes())
    }

    pub fn value<T: Canonical>(&mut self, tag: u8, value: &T) -> &mut Self {
        let bytes = value.to_canonical_bytes();
        self.raw(tag, &bytes)
    }

    pub fn opt_value<T: Canonical>(&mut self, tag: u8, value: Option<&T>) -> &mut Self {
        if let Some(v) = value {
            self.value(tag, v);
        }
        self
    }

    pub fn bytes_list<B: AsRef<[u8]>>(&mut self, tag: u8, items: &[B]) -> &mut Self {
        let mut buf = Vec::new();
        encode_bytes_list(items, &mut buf);
        self.raw(tag, &buf)
    }

    pub fn str_list<S: AsRef<str>>(&mut self, tag: u8, items: &[S]) -> &mut Self {
        let mut buf = Vec::new();
        for item in items {
            put_len(&mut buf, item.as_ref().len());
            buf.extend_from_slice(item.as_ref().as_bytes());
        }
        self.raw(tag, &buf)
    }

    pub fn list<T: Canonical>(&mut self, tag: u8, items: &[T]) -> &mut Self {
        let mut buf = Vec::new();
        encode_list(items, &mut buf);
        self.raw(tag, &buf)
    }

    pub fn map(&mut self, tag: u8, map: &BTreeMap<Vec<u8>, Vec<u8>>) -> &mut Self {
        let mut buf = Vec::new();
        encode_map(map, &mut buf);
        self.raw(tag, &buf)
    }
}

pub fn encode_bytes_list<B: AsRef<[u8]>>(items: &[B], out: &mut Vec<u8>) {
    for item in items {
        put_len(out, item.as_ref().len());
        out.extend_from_slice(item.as_ref());
    }
}

pub fn encode_list<T: Canonical>(items: &[T], out: &mut Vec<u8>) {
    for item in items {
        let bytes = item.to_canonical_bytes();
        put_len(out, bytes.len());
        out.extend_from_slice(&bytes);
    }
}

pub fn encode_map(map: &BTreeMap<Vec<u8>, Vec<u8>>, out: &mut Vec<u8>) {
    for (k, v) in map {
        put_len(out, k.len());
        out.extend_from_slice(k);
        put_len(out, v.len());
        out.extend_from_slice(v);
    }
}

fn take<'b>(bytes: &mut &'b [u8], n: usize) -> Result<&'b [u8], CodecError> {
    if bytes.len() < n {
        return Err(CodecError::Truncated);
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn take_len(bytes: &mut &[u8]) -> Result<usize, CodecError> {
    let raw = take(bytes, 4)?;
    Ok(u32::from_be_bytes(raw.try_into().expect("4 bytes")) as usize)
}

fn take_prefixed<'b>(bytes: &mut &'b [u8]) -> Result<&'b [u8], CodecError> {
    let len = take_len(bytes)?;
    take(bytes, len)
}

/// Strict reader for struct encodings.
pub struct StructReader<'b> {
    rest: &'b [u8],
    pending: Option<(u8, &'b [u8])>,
    last_tag: Option<u8>,
}

impl<'b> StructReader<'b> {
    pub fn new(bytes: &'b [u8]) -> Self {
        Self { rest: bytes, pending: None, last_tag: None }
    }

    fn peek(&mut self) -> Result<Option<(u8, &'b [u8])>, CodecError> {
        if self.pending.is_none() && !self.rest.is_empty() {
            let tag = take(&mut self.rest, 1)?[0];
            if self.last_tag.is_some_and(|t| t >= tag) {
                return Err(CodecError::Invalid("field tags not strictly ascending"));
            }
            self.last_tag = Some(tag);
            let value = take_prefixed(&mut self.rest)?;
            self.pending = Some((tag, value));
        }
        Ok(self.pending)
    }

    pub fn opt_raw(&mut self, tag: u8) -> Result<Option<&'b [u8]>, CodecError> {
        match self.peek()? {
            Some((t, v)) if t == tag => {
                self.pending = None;
                Ok(Some(v))
            }
            Some((t, _)) if t < tag => Err(CodecError::UnexpectedTag { expected: tag, found: t }),
            _ => Ok(None),
        }
    }

    pub fn raw(&mut self, tag: u8) -> Result<&'b [u8], CodecError> {
        self.opt_raw(tag)?.ok_or(CodecError::MissingField(tag))
    }

    pub fn bytes(&mut self, tag: u8) -> Result<Vec<u8>, CodecError> {
        Ok(self.raw(tag)?.to_vec())
    }

    pub fn fixed<const N: usize>(&mut self, tag: u8) -> Result<[u8; N], CodecError> {
        let raw = self.raw(tag)?;
        raw.try_into()
            .map_err(|_| CodecError::BadLength { expected: N, found: raw.len() })
    }

    pub fn string(&mut self, tag: u8) -> Result<String, CodecError> {
        utf8(self.raw(tag)?)
    }

    pub fn u8(&mut self, tag: u8) -> Result<u8, CodecError> {
        Ok(self.fixed::<1>(tag)?[0])
    }

    pub fn u64(&mut self, tag: u8) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.fixed::<8>(tag)?))
    }

    pub fn value<T: Canonical>(&mut self, tag: u8) -> Result<T, CodecError> {
        T::decode_from(self.raw(tag)?)
    }

    pub fn opt_value<T: Canonical>(&mut self, tag: u8) -> Result<Option<T>, CodecError> {
        self.opt_raw(tag)?.map(T::decode_from).transpose()
    }

    pub fn bytes_list(&mut self, tag: u8) -> Result<Vec<Vec<u8>>, CodecError> {
        decode_bytes_list(self.raw(tag)?)
    }

    pub fn str_list(&mut self, tag: u8) -> Result<Vec<String>, CodecError> {
        decode_bytes_list(self.raw(tag)?)?
            .iter()
            .map(|b| utf8(b))
            .collect()
    }

    pub fn list<T: Canonical>(&mut self, tag: u8) -> Result<Vec<T>, CodecError> {
        decode_list(self.raw(tag)?)
    }

    pub fn map(&mut self, tag: u8) -> Result<BTreeMap<Vec<u8>, Vec<u8>>, CodecError> {
        decode_map(self.raw(tag)?)
    }

    /// Fails if any field remains unread.
    pub fn finish(mut self) -> Result<(), CodecError> {
        match self.peek()? {
            None => Ok(()),
            Some((t, _)) => Err(CodecError::UnexpectedTag { expected: 0, found: t }),
        }
    }
}

fn utf8(bytes: &[u8]) -> Result<String, CodecError> {
    String::from_utf8(bytes.to_vec()).map_err(|_| CodecError::InvalidUtf8)
}

pub fn decode_bytes_list(mut bytes: &[u8]) -> Result<Vec<Vec<u8>>, CodecError> {
    let mut items = Vec::new();
    while !bytes.is_empty() {
        items.push(take_prefixed(&mut bytes)?.to_vec());
    }
    Ok(items)
}

pub fn decode_list<T: Canonical>(mut bytes: &[u8]) -> Result<Vec<T>, CodecError> {
    let mut items = Vec::new();
    while !bytes.is_empty() {
        items.push(T::decode_from(take_prefixed(&mut bytes)?)?);
    }
    Ok(items)
}

pub fn decode_map(mut bytes: &[u8]) -> Result<BTreeMap<Vec<u8>, Vec<u8>>, CodecError> {
    let mut map = BTreeMap::new();
    let mut last: Option<Vec<u8>> = None;
    while !bytes.is_empty() {
        let k = take_prefixed(&mut bytes)?.to_vec();
        let v = take_prefixed(&mut bytes)?.to_vec();
        if last.as_ref().is_some_and(|l| l >= &k) {
            return Err(CodecError::UnsortedKeys);
        }
        last = Some(k.clone());
        map.insert(k, v);
    }
    Ok(map)
}

/// A bare byte string encodes as itself.
impl Canonical for Vec<u8> {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        Ok(bytes.to_vec())
    }
}

impl Canonical for BTreeMap<Vec<u8>, Vec<u8>> {
    fn encode_into(&self, out: &mut Vec<u8>) {
        encode_map(self, out);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        decode_map(bytes)
    }
}

/// Encodes a list of canonical values as a standalone byte string.
pub fn encode_list_bytes<T: Canonical>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    encode_list(items, &mut out);
    out
}
