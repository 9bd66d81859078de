//! Social profile overlays.
//!
//! A library and deterministic simulator for a decentralized social network
//! built from structured P2P overlays:
//!
//! * one public **directory overlay** for friend discovery, friendship
//!   mailboxes, and bootstrap;
//! * one private **profile overlay** per user, admission-gated by
//!   certificates the profile owner signs (the owner is the CA for its own
//!   overlay), holding the owner's posts, private-message mailbox, and
//!   revocation records in a replicated DHT.
//!
//! All networking is simulated: state lives in plain values owned by a
//! single-threaded event loop, and every run is a pure function of
//! (configuration, seed). See the `sim` module for the experiment runners
//! and the `socialmesh` CLI for the command-line entry points.

pub mod addr;
pub mod canonical;
pub mod crypto;
pub mod dht;
pub mod directory;
pub mod identity;
pub mod overlay;
pub mod profile;
pub mod sim;

pub use addr::{AddressSpace, NodeId};
pub use crypto::{CryptoProvider, Digest, RealCrypto, TestCrypto};
