//! Canonical binary encoding for every record that gets hashed, signed, or
//! stored in the DHT.
//!
//! The format is deterministic and injective per record type:
//!
//! ```text
//! record     := type-tag (1 byte) || fields in declaration order
//! integer    := fixed-width big-endian (u8 / u32 / u64)
//! string     := u32 length (big-endian) || UTF-8 bytes
//! bytes      := u32 length (big-endian) || raw bytes
//! list       := u32 count (big-endian) || elements
//! digest     := 32 raw bytes
//! node id    := 32 raw bytes (big-endian address)
//! option     := u8 0|1 || value if 1
//! ```
//!
//! These bytes are the on-"wire" and at-rest format; golden-file tests pin
//! them. Changing anything here is a format break.

use thiserror::Error;

use crate::addr::NodeId;
use crate::crypto::Digest;

/// Record type tags. One byte leads every encoded record.
pub mod tags {
    pub const PUBLIC_INFO: u8 = 0x01;
    pub const CERTIFICATE: u8 = 0x02;
    pub const FRIEND_ENTRY: u8 = 0x03;
    pub const MEMBER_CERTIFICATE: u8 = 0x04;
    pub const REVOCATION_RECORD: u8 = 0x05;
    pub const FRIENDSHIP_REQUEST: u8 = 0x06;
    pub const FRIENDSHIP_RESPONSE: u8 = 0x07;
    pub const ACTIVE_PEER_RECORD: u8 = 0x08;
    pub const PROFILE_POST: u8 = 0x09;
    pub const PRIVATE_MESSAGE: u8 = 0x0a;
    pub const PRIVATE_MESSAGE_ENVELOPE: u8 = 0x0b;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CanonicalError {
    #[error("input ended before the record was complete")]
    Truncated,
    #[error("string longer than u32::MAX bytes")]
    StringTooLong,
    #[error("byte field or list longer than u32::MAX")]
    FieldTooLong,
    #[error("string field is not valid UTF-8")]
    InvalidUtf8,
    #[error("expected type tag {expected:#04x}, found {found:#04x}")]
    WrongTag { expected: u8, found: u8 },
    #[error("unknown discriminant {0} for enum field")]
    BadDiscriminant(u8),
    #[error("trailing bytes after record")]
    TrailingBytes,
}

#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Encoder {
        Encoder::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_fixed(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn put_digest(&mut self, d: &Digest) {
        self.buf.extend_from_slice(&d.0);
    }

    pub fn put_node_id(&mut self, id: NodeId) {
        self.buf.extend_from_slice(&id.to_be_bytes());
    }

    pub fn put_bytes(&mut self, bytes: &[u8]) -> Result<(), CanonicalError> {
        let len: u32 = bytes
            .len()
            .try_into()
            .map_err(|_| CanonicalError::FieldTooLong)?;
        self.put_u32(len);
        self.buf.extend_from_slice(bytes);
        Ok(())
    }

    pub fn put_string(&mut self, s: &str) -> Result<(), CanonicalError> {
        let len: u32 = s
            .len()
            .try_into()
            .map_err(|_| CanonicalError::StringTooLong)?;
        self.put_u32(len);
        self.buf.extend_from_slice(s.as_bytes());
        Ok(())
    }

    pub fn put_count(&mut self, n: usize) -> Result<(), CanonicalError> {
        let n: u32 = n.try_into().map_err(|_| CanonicalError::FieldTooLong)?;
        self.put_u32(n);
        Ok(())
    }
}

pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Decoder<'a> {
        Decoder { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CanonicalError> {
        if self.data.len() - self.pos < n {
            return Err(CanonicalError::Truncated);
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn take_u8(&mut self) -> Result<u8, CanonicalError> {
        Ok(self.take(1)?[0])
    }

    pub fn take_u32(&mut self) -> Result<u32, CanonicalError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn take_u64(&mut self) -> Result<u64, CanonicalError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn take_digest(&mut self) -> Result<Digest, CanonicalError> {
        Ok(Digest(self.take(32)?.try_into().unwrap()))
    }

    pub fn take_node_id(&mut self) -> Result<NodeId, CanonicalError> {
        Ok(NodeId::from_be_bytes(self.take(32)?.try_into().unwrap()))
    }

    pub fn take_bytes(&mut self) -> Result<Vec<u8>, CanonicalError> {
        let len = self.take_u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    pub fn take_string(&mut self) -> Result<String, CanonicalError> {
        let bytes = self.take_bytes()?;
        String::from_utf8(bytes).map_err(|_| CanonicalError::InvalidUtf8)
    }

    pub fn take_count(&mut self) -> Result<usize, CanonicalError> {
        Ok(self.take_u32()? as usize)
    }

    pub fn expect_tag(&mut self, expected: u8) -> Result<(), CanonicalError> {
        let found = self.take_u8()?;
        if found != expected {
            return Err(CanonicalError::WrongTag { expected, found });
        }
        Ok(())
    }

    /// Peek at the leading type tag without consuming it.
    pub fn peek_tag(&self) -> Result<u8, CanonicalError> {
        self.data
            .get(self.pos)
            .copied()
            .ok_or(CanonicalError::Truncated)
    }

    pub fn finish(&self) -> Result<(), CanonicalError> {
        if self.pos != self.data.len() {
            return Err(CanonicalError::TrailingBytes);
        }
        Ok(())
    }
}

/// A record with a canonical byte representation.
pub trait Canonical: Sized {
    const TAG: u8;

    fn encode_body(&self, enc: &mut Encoder) -> Result<(), CanonicalError>;

    fn decode_body(dec: &mut Decoder) -> Result<Self, CanonicalError>;

    fn canonical_bytes(&self) -> Result<Vec<u8>, CanonicalError> {
        let mut enc = Encoder::new();
        enc.put_u8(Self::TAG);
        self.encode_body(&mut enc)?;
        Ok(enc.into_bytes())
    }

    /// Decode one record nested inside a larger encoding.
    fn decode_from(dec: &mut Decoder) -> Result<Self, CanonicalError> {
        dec.expect_tag(Self::TAG)?;
        Self::decode_body(dec)
    }

    /// Decode a standalone record; trailing bytes are an error.
    fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, CanonicalError> {
        let mut dec = Decoder::new(bytes);
        let value = Self::decode_from(&mut dec)?;
        dec.finish()?;
        Ok(value)
    }
}
