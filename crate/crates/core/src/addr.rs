//! Ring address space: 256-bit addresses, node identifiers, and the modular
//! arithmetic every overlay operation is built on.
//!
//! The address space is `[0, 2^B)` with `B` configurable between 8 (exhaustive
//! small-space tests) and 256. The default is 160 bits. All distances are
//! clockwise: `distance(a, b) = (b - a) mod 2^B`.

use std::fmt;

use thiserror::Error;

use crate::crypto;

/// Default number of address bits for production-shaped overlays.
pub const DEFAULT_ADDRESS_BITS: u16 = 160;

/// Minimum supported address-space width.
pub const MIN_ADDRESS_BITS: u16 = 8;

/// Maximum supported address-space width.
pub const MAX_ADDRESS_BITS: u16 = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AddrError {
    #[error("address bits must be in [{MIN_ADDRESS_BITS}, {MAX_ADDRESS_BITS}], got {0}")]
    InvalidBits(u16),
    #[error("address {addr} does not fit in a {bits}-bit space")]
    OutOfRange { addr: Addr, bits: u16 },
}

/// A 256-bit unsigned integer stored as four big-endian `u64` limbs
/// (`limb[0]` is the most significant). The derived ordering is numeric.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Addr([u64; 4]);

impl Addr {
    pub const ZERO: Addr = Addr([0; 4]);

    pub fn from_be_bytes(bytes: [u8; 32]) -> Addr {
        let mut limbs = [0u64; 4];
        for (i, chunk) in bytes.chunks_exact(8).enumerate() {
            limbs[i] = u64::from_be_bytes(chunk.try_into().unwrap());
        }
        Addr(limbs)
    }

    pub fn to_be_bytes(self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (i, limb) in self.0.iter().enumerate() {
            out[i * 8..(i + 1) * 8].copy_from_slice(&limb.to_be_bytes());
        }
        out
    }

    pub fn from_u64(v: u64) -> Addr {
        Addr([0, 0, 0, v])
    }

    pub fn from_u128(v: u128) -> Addr {
        Addr([0, 0, (v >> 64) as u64, v as u64])
    }

    /// Low 64 bits; convenient in small-space tests.
    pub fn low_u64(self) -> u64 {
        self.0[3]
    }

    pub fn is_zero(self) -> bool {
        self.0 == [0; 4]
    }

    pub fn wrapping_add(self, rhs: Addr) -> Addr {
        let mut out = [0u64; 4];
        let mut carry = 0u64;
        for i in (0..4).rev() {
            let (s1, c1) = self.0[i].overflowing_add(rhs.0[i]);
            let (s2, c2) = s1.overflowing_add(carry);
            out[i] = s2;
            carry = (c1 as u64) + (c2 as u64);
        }
        Addr(out)
    }

    pub fn wrapping_sub(self, rhs: Addr) -> Addr {
        let mut out = [0u64; 4];
        let mut borrow = 0u64;
        for i in (0..4).rev() {
            let (d1, b1) = self.0[i].overflowing_sub(rhs.0[i]);
            let (d2, b2) = d1.overflowing_sub(borrow);
            out[i] = d2;
            borrow = (b1 as u64) + (b2 as u64);
        }
        Addr(out)
    }

    /// The power of two `2^bit`; `bit` must be below 256.
    pub fn pow2(bit: u16) -> Addr {
        assert!(bit < 256, "pow2 exponent out of range: {bit}");
        let mut limbs = [0u64; 4];
        limbs[3 - (bit / 64) as usize] = 1u64 << (bit % 64);
        Addr(limbs)
    }

    /// Keep only the low `bits` bits (i.e. reduce modulo `2^bits`).
    pub fn mask_bits(self, bits: u16) -> Addr {
        if bits >= 256 {
            return self;
        }
        let mut limbs = self.0;
        for (i, limb) in limbs.iter_mut().enumerate() {
            let limb_low_bit = 64 * (3 - i) as u16;
            if bits <= limb_low_bit {
                *limb = 0;
            } else {
                let keep = bits - limb_low_bit;
                if keep < 64 {
                    *limb &= (1u64 << keep) - 1;
                }
            }
        }
        Addr(limbs)
    }
}

fn fmt_hex(addr: &Addr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let bytes = addr.to_be_bytes();
    let first = bytes.iter().position(|b| *b != 0).unwrap_or(31);
    write!(f, "0x")?;
    for b in &bytes[first..] {
        write!(f, "{b:02x}")?;
    }
    Ok(())
}

impl fmt::Debug for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_hex(self, f)
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_hex(self, f)
    }
}

/// Identity of a peer (or position of a key) within one overlay's ring.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(Addr);

impl NodeId {
    pub const ZERO: NodeId = NodeId(Addr::ZERO);

    pub fn from_addr(addr: Addr) -> NodeId {
        NodeId(addr)
    }

    pub fn from_be_bytes(bytes: [u8; 32]) -> NodeId {
        NodeId(Addr::from_be_bytes(bytes))
    }

    pub fn addr(self) -> Addr {
        self.0
    }

    pub fn to_be_bytes(self) -> [u8; 32] {
        self.0.to_be_bytes()
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A ring address space of `2^bits` positions. Copyable configuration, not
/// state: every distance or interval computation goes through it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AddressSpace {
    bits: u16,
}

impl Default for AddressSpace {
    fn default() -> Self {
        AddressSpace {
            bits: DEFAULT_ADDRESS_BITS,
        }
    }
}

impl AddressSpace {
    pub fn new(bits: u16) -> Result<AddressSpace, AddrError> {
        if !(MIN_ADDRESS_BITS..=MAX_ADDRESS_BITS).contains(&bits) {
            return Err(AddrError::InvalidBits(bits));
        }
        Ok(AddressSpace { bits })
    }

    pub fn bits(self) -> u16 {
        self.bits
    }

    pub fn contains(self, addr: Addr) -> bool {
        addr.mask_bits(self.bits) == addr
    }

    pub fn node_id(self, addr: Addr) -> Result<NodeId, AddrError> {
        if !self.contains(addr) {
            return Err(AddrError::OutOfRange {
                addr,
                bits: self.bits,
            });
        }
        Ok(NodeId(addr))
    }

    /// Test helper; panics when the value does not fit the space.
    pub fn id_from_u64(self, v: u64) -> NodeId {
        self.node_id(Addr::from_u64(v)).expect("id out of range")
    }

    /// Hash arbitrary bytes into the address space.
    pub fn derive_id(self, bytes: &[u8]) -> NodeId {
        let digest = crypto::sha256(bytes);
        NodeId(Addr::from_be_bytes(digest.0).mask_bits(self.bits))
    }

    /// Reduce an arbitrary id (e.g. decoded from untrusted bytes) into this
    /// space.
    pub fn clamp(self, id: NodeId) -> NodeId {
        NodeId(id.0.mask_bits(self.bits))
    }

    /// Clockwise distance `(b - a) mod 2^bits`.
    pub fn ring_distance(self, a: NodeId, b: NodeId) -> Addr {
        b.0.wrapping_sub(a.0).mask_bits(self.bits)
    }

    /// The position `offset` steps clockwise from `a`.
    pub fn offset(self, a: NodeId, offset: Addr) -> NodeId {
        NodeId(a.0.wrapping_add(offset).mask_bits(self.bits))
    }

    /// Whether `x` lies in the clockwise half-open interval `(a, b]`.
    /// When `a == b` the interval is the full ring.
    pub fn in_interval_oc(self, a: NodeId, b: NodeId, x: NodeId) -> bool {
        if a == b {
            return true;
        }
        let d = self.ring_distance(a, x);
        !d.is_zero() && d <= self.ring_distance(a, b)
    }
}
