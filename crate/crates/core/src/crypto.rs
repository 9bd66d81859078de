//! Pluggable cryptography.
//!
//! Two providers implement [`CryptoProvider`]:
//!
//! * [`RealCrypto`] - ed25519 signatures plus an x25519 + ChaCha20-Poly1305
//!   hybrid envelope. Use this one when the bytes matter.
//! * [`TestCrypto`] - hash-based stand-ins that are byte-reproducible under a
//!   fixed seed. **Not secure in any sense**; it exists so protocol tests and
//!   golden files are stable and fast.
//!
//! Hashing is SHA-256 for both providers; DHT key derivation and value
//! hashing use [`sha256`] directly and are provider-independent.

use ed25519_dalek::{Signer, Verifier};
use rand::RngCore;
use sha2::{Digest as _, Sha256};
use std::fmt;

/// A 32-byte SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..8] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..")
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

pub fn sha256(data: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(data);
    Digest(h.finalize().into())
}

pub fn sha256_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

#[derive(Clone, PartialEq, Eq, Debug, Hash, PartialOrd, Ord)]
pub struct PublicKey(pub Vec<u8>);

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey(pub Vec<u8>);

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PrivateKey(..)")
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Signature(pub Vec<u8>);

#[derive(Clone, PartialEq, Eq)]
pub struct SymKey(pub Vec<u8>);

#[derive(Clone)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

/// Hash, signature, and encryption operations behind one interface.
///
/// All operations are pure given their inputs plus the supplied RNG stream,
/// so anything built on top stays deterministic under a fixed seed.
pub trait CryptoProvider {
    fn name(&self) -> &'static str;

    fn hash(&self, data: &[u8]) -> Digest {
        sha256(data)
    }

    fn generate_keypair(&self, rng: &mut dyn RngCore) -> KeyPair;

    fn sign(&self, key: &PrivateKey, message: &[u8]) -> Signature;

    fn verify(&self, key: &PublicKey, message: &[u8], signature: &Signature) -> bool;

    fn generate_sym_key(&self, rng: &mut dyn RngCore) -> SymKey;

    /// Public-key encryption of a small payload (typically a symmetric key).
    fn seal(&self, recipient: &PublicKey, plaintext: &[u8], rng: &mut dyn RngCore) -> Vec<u8>;

    /// Inverse of [`seal`](CryptoProvider::seal); `None` on wrong key or
    /// damaged ciphertext.
    fn open(&self, key: &PrivateKey, sealed: &[u8]) -> Option<Vec<u8>>;

    fn sym_encrypt(&self, key: &SymKey, plaintext: &[u8], rng: &mut dyn RngCore) -> Vec<u8>;

    fn sym_decrypt(&self, key: &SymKey, ciphertext: &[u8]) -> Option<Vec<u8>>;
}

/// Static handle for a built-in provider by name ("test" or "real").
pub fn static_provider(name: &str) -> &'static dyn CryptoProvider {
    match name {
        "real" => &RealCrypto,
        _ => &TestCrypto,
    }
}

// ---------------------------------------------------------------------------
// Test provider
// ---------------------------------------------------------------------------

/// Deterministic, insecure provider for protocol tests and golden files.
///
/// Signatures are hashes over (public key, message digest): anyone can forge
/// them. Encryption is a SHA-256 keystream with a hash MAC. Do not use
/// outside simulations.
#[derive(Clone, Copy, Debug, Default)]
pub struct TestCrypto;

const T_PUB: &[u8] = b"sm.test.pub";
const T_SIG: &[u8] = b"sm.test.sig";
const T_NONCE: &[u8] = b"sm.test.nonce";
const T_STREAM: &[u8] = b"sm.test.stream";
const T_MAC: &[u8] = b"sm.test.mac";
const T_KX: &[u8] = b"sm.test.kx";
const T_WHO: &[u8] = b"sm.test.who";

impl TestCrypto {
    fn derive_public(private: &PrivateKey) -> PublicKey {
        PublicKey(sha256_parts(&[T_PUB, &private.0]).0.to_vec())
    }

    fn xor_stream(key: &[u8], nonce: &[u8], data: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(data.len());
        for (counter, chunk) in data.chunks(32).enumerate() {
            let block = sha256_parts(&[T_STREAM, key, nonce, &(counter as u32).to_be_bytes()]);
            for (b, k) in chunk.iter().zip(block.0.iter()) {
                out.push(b ^ k);
            }
        }
        out
    }

    fn raw_encrypt(key: &[u8], plaintext: &[u8]) -> Vec<u8> {
        let nonce = &sha256_parts(&[T_NONCE, key, plaintext]).0[..16];
        let body = Self::xor_stream(key, nonce, plaintext);
        let mac = &sha256_parts(&[T_MAC, key, nonce, &body]).0[..16];
        let mut out = Vec::with_capacity(32 + body.len());
        out.extend_from_slice(nonce);
        out.extend_from_slice(&body);
        out.extend_from_slice(mac);
        out
    }

    fn raw_decrypt(key: &[u8], ciphertext: &[u8]) -> Option<Vec<u8>> {
        if ciphertext.len() < 32 {
            return None;
        }
        let (nonce, rest) = ciphertext.split_at(16);
        let (body, mac) = rest.split_at(rest.len() - 16);
        let expect = &sha256_parts(&[T_MAC, key, nonce, body]).0[..16];
        if mac != expect {
            return None;
        }
        Some(Self::xor_stream(key, nonce, body))
    }
}

impl CryptoProvider for TestCrypto {
    fn name(&self) -> &'static str {
        "test"
    }

    fn generate_keypair(&self, rng: &mut dyn RngCore) -> KeyPair {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let private = PrivateKey(seed.to_vec());
        let public = Self::derive_public(&private);
        KeyPair { public, private }
    }

    fn sign(&self, key: &PrivateKey, message: &[u8]) -> Signature {
        let public = Self::derive_public(key);
        let digest = sha256(message);
        Signature(sha256_parts(&[T_SIG, &public.0, &digest.0]).0.to_vec())
    }

    fn verify(&self, key: &PublicKey, message: &[u8], signature: &Signature) -> bool {
        let digest = sha256(message);
        signature.0 == sha256_parts(&[T_SIG, &key.0, &digest.0]).0.to_vec()
    }

    fn generate_sym_key(&self, rng: &mut dyn RngCore) -> SymKey {
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        SymKey(key.to_vec())
    }

    fn seal(&self, recipient: &PublicKey, plaintext: &[u8], rng: &mut dyn RngCore) -> Vec<u8> {
        let mut salt = [0u8; 16];
        rng.fill_bytes(&mut salt);
        let shared = sha256_parts(&[T_KX, &recipient.0, &salt]);
        let tag = &sha256_parts(&[T_WHO, &recipient.0]).0[..8];
        let mut out = Vec::new();
        out.extend_from_slice(tag);
        out.extend_from_slice(&salt);
        out.extend_from_slice(&Self::raw_encrypt(&shared.0, plaintext));
        out
    }

    fn open(&self, key: &PrivateKey, sealed: &[u8]) -> Option<Vec<u8>> {
        if sealed.len() < 24 {
            return None;
        }
        let public = Self::derive_public(key);
        let (tag, rest) = sealed.split_at(8);
        if tag != &sha256_parts(&[T_WHO, &public.0]).0[..8] {
            return None;
        }
        let (salt, body) = rest.split_at(16);
        let shared = sha256_parts(&[T_KX, &public.0, salt]);
        Self::raw_decrypt(&shared.0, body)
    }

    fn sym_encrypt(&self, key: &SymKey, plaintext: &[u8], _rng: &mut dyn RngCore) -> Vec<u8> {
        Self::raw_encrypt(&key.0, plaintext)
    }

    fn sym_decrypt(&self, key: &SymKey, ciphertext: &[u8]) -> Option<Vec<u8>> {
        Self::raw_decrypt(&key.0, ciphertext)
    }
}

// ---------------------------------------------------------------------------
// Real provider
// ---------------------------------------------------------------------------

/// ed25519 signatures, x25519 key agreement, ChaCha20-Poly1305 payloads.
///
/// Keys are concatenations: private = ed25519 seed (32) || x25519 secret
/// (32); public = ed25519 verifying key (32) || x25519 public key (32).
#[derive(Clone, Copy, Debug, Default)]
pub struct RealCrypto;

const R_KX: &[u8] = b"sm.real.kx";
const R_SYM: &[u8] = b"sm.real.sym";

impl RealCrypto {
    fn cipher_key(parts: &[&[u8]]) -> chacha20poly1305::Key {
        let mut h = Sha256::new();
        for p in parts {
            h.update(p);
        }
        let bytes: [u8; 32] = h.finalize().into();
        bytes.into()
    }

    fn aead_encrypt(key: &chacha20poly1305::Key, nonce: &[u8; 12], plaintext: &[u8]) -> Vec<u8> {
        use chacha20poly1305::aead::Aead;
        use chacha20poly1305::KeyInit;
        let cipher = chacha20poly1305::ChaCha20Poly1305::new(key);
        cipher
            .encrypt(chacha20poly1305::Nonce::from_slice(nonce), plaintext)
            .expect("chacha20poly1305 encryption is infallible for in-memory data")
    }

    fn aead_decrypt(
        key: &chacha20poly1305::Key,
        nonce: &[u8; 12],
        ciphertext: &[u8],
    ) -> Option<Vec<u8>> {
        use chacha20poly1305::aead::Aead;
        use chacha20poly1305::KeyInit;
        let cipher = chacha20poly1305::ChaCha20Poly1305::new(key);
        cipher
            .decrypt(chacha20poly1305::Nonce::from_slice(nonce), ciphertext)
            .ok()
    }
}

impl CryptoProvider for RealCrypto {
    fn name(&self) -> &'static str {
        "real"
    }

    fn generate_keypair(&self, rng: &mut dyn RngCore) -> KeyPair {
        let mut ed_seed = [0u8; 32];
        let mut x_secret = [0u8; 32];
        rng.fill_bytes(&mut ed_seed);
        rng.fill_bytes(&mut x_secret);
        let signing = ed25519_dalek::SigningKey::from_bytes(&ed_seed);
        let x_public = x25519_dalek::PublicKey::from(&x25519_dalek::StaticSecret::from(x_secret));
        let mut public = signing.verifying_key().to_bytes().to_vec();
        public.extend_from_slice(x_public.as_bytes());
        let mut private = ed_seed.to_vec();
        private.extend_from_slice(&x_secret);
        KeyPair {
            public: PublicKey(public),
            private: PrivateKey(private),
        }
    }

    fn sign(&self, key: &PrivateKey, message: &[u8]) -> Signature {
        let seed: [u8; 32] = key.0[..32].try_into().expect("malformed private key");
        let signing = ed25519_dalek::SigningKey::from_bytes(&seed);
        Signature(signing.sign(message).to_bytes().to_vec())
    }

    fn verify(&self, key: &PublicKey, message: &[u8], signature: &Signature) -> bool {
        if key.0.len() != 64 || signature.0.len() != 64 {
            return false;
        }
        let ed_bytes: [u8; 32] = match key.0[..32].try_into() {
            Ok(b) => b,
            Err(_) => return false,
        };
        let Ok(verifying) = ed25519_dalek::VerifyingKey::from_bytes(&ed_bytes) else {
            return false;
        };
        let sig_bytes: [u8; 64] = match signature.0.as_slice().try_into() {
            Ok(b) => b,
            Err(_) => return false,
        };
        let sig = ed25519_dalek::Signature::from_bytes(&sig_bytes);
        verifying.verify(message, &sig).is_ok()
    }

    fn generate_sym_key(&self, rng: &mut dyn RngCore) -> SymKey {
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        SymKey(key.to_vec())
    }

    fn seal(&self, recipient: &PublicKey, plaintext: &[u8], rng: &mut dyn RngCore) -> Vec<u8> {
        if recipient.0.len() != 64 {
            // Unsealable garbage for malformed keys; open() on any key fails.
            return vec![0u8; 33];
        }
        let recipient_x: [u8; 32] = recipient.0[32..].try_into().unwrap();
        let recipient_x = x25519_dalek::PublicKey::from(recipient_x);
        let mut eph_bytes = [0u8; 32];
        rng.fill_bytes(&mut eph_bytes);
        let eph = x25519_dalek::StaticSecret::from(eph_bytes);
        let eph_pub = x25519_dalek::PublicKey::from(&eph);
        let shared = eph.diffie_hellman(&recipient_x);
        let key = Self::cipher_key(&[
            R_KX,
            shared.as_bytes(),
            eph_pub.as_bytes(),
            recipient_x.as_bytes(),
        ]);
        let mut out = eph_pub.as_bytes().to_vec();
        out.extend_from_slice(&Self::aead_encrypt(&key, &[0u8; 12], plaintext));
        out
    }

    fn open(&self, key: &PrivateKey, sealed: &[u8]) -> Option<Vec<u8>> {
        if key.0.len() != 64 || sealed.len() < 32 + 16 {
            return None;
        }
        let x_secret: [u8; 32] = key.0[32..].try_into().ok()?;
        let x_secret = x25519_dalek::StaticSecret::from(x_secret);
        let own_pub = x25519_dalek::PublicKey::from(&x_secret);
        let eph_pub: [u8; 32] = sealed[..32].try_into().ok()?;
        let eph_pub = x25519_dalek::PublicKey::from(eph_pub);
        let shared = x_secret.diffie_hellman(&eph_pub);
        let cipher_key = Self::cipher_key(&[
            R_KX,
            shared.as_bytes(),
            eph_pub.as_bytes(),
            own_pub.as_bytes(),
        ]);
        Self::aead_decrypt(&cipher_key, &[0u8; 12], &sealed[32..])
    }

    fn sym_encrypt(&self, key: &SymKey, plaintext: &[u8], rng: &mut dyn RngCore) -> Vec<u8> {
        let mut nonce = [0u8; 12];
        rng.fill_bytes(&mut nonce);
        let cipher_key = Self::cipher_key(&[R_SYM, &key.0]);
        let mut out = nonce.to_vec();
        out.extend_from_slice(&Self::aead_encrypt(&cipher_key, &nonce, plaintext));
        out
    }

    fn sym_decrypt(&self, key: &SymKey, ciphertext: &[u8]) -> Option<Vec<u8>> {
        if ciphertext.len() < 12 + 16 {
            return None;
        }
        let nonce: [u8; 12] = ciphertext[..12].try_into().ok()?;
        let cipher_key = Self::cipher_key(&[R_SYM, &key.0]);
        Self::aead_decrypt(&cipher_key, &nonce, &ciphertext[12..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn providers() -> Vec<Box<dyn CryptoProvider>> {
        vec![Box::new(TestCrypto), Box::new(RealCrypto)]
    }

    #[test]
    fn sign_verify_round_trip_both_providers() {
        for p in providers() {
            let mut rng = ChaCha20Rng::seed_from_u64(1);
            let keys = p.generate_keypair(&mut rng);
            let msg = b"hello overlay";
            let sig = p.sign(&keys.private, msg);
            assert!(p.verify(&keys.public, msg, &sig), "provider {}", p.name());
            assert!(!p.verify(&keys.public, b"hello overlaz", &sig));
            let other = p.generate_keypair(&mut rng);
            assert!(!p.verify(&other.public, msg, &sig));
        }
    }

    #[test]
    fn seal_open_only_for_recipient() {
        for p in providers() {
            let mut rng = ChaCha20Rng::seed_from_u64(2);
            let alice = p.generate_keypair(&mut rng);
            let bob = p.generate_keypair(&mut rng);
            let sealed = p.seal(&alice.public, b"secret key material", &mut rng);
            assert_eq!(
                p.open(&alice.private, &sealed).as_deref(),
                Some(b"secret key material".as_slice()),
                "provider {}",
                p.name()
            );
            assert!(p.open(&bob.private, &sealed).is_none());
        }
    }

    #[test]
    fn symmetric_round_trip_and_tamper() {
        for p in providers() {
            let mut rng = ChaCha20Rng::seed_from_u64(3);
            let key = p.generate_sym_key(&mut rng);
            let ct = p.sym_encrypt(&key, b"board post", &mut rng);
            assert_eq!(p.sym_decrypt(&key, &ct).as_deref(), Some(b"board post".as_slice()));
            for i in 0..ct.len() {
                let mut bad = ct.clone();
                bad[i] ^= 1;
                assert!(p.sym_decrypt(&key, &bad).is_none(), "bit flip at byte {i} undetected");
            }
        }
    }

    #[test]
    fn test_provider_is_seed_deterministic() {
        let p = TestCrypto;
        let run = || {
            let mut rng = ChaCha20Rng::seed_from_u64(9);
            let keys = p.generate_keypair(&mut rng);
            let sealed = p.seal(&keys.public, b"payload", &mut rng);
            (keys.public.0.clone(), sealed)
        };
        assert_eq!(run(), run());
    }
}
