//! Identities and social credentials: self-signed certificates with appended
//! friend entries, owner-issued profile-membership certificates, and
//! revocation records.
//!
//! A certificate's identity hash covers only its self-signed body, never the
//! friend-entry tail, so collecting attestations from friends can not change
//! who you are. Friend entries carry a timestamp instead of a revocation
//! mechanism: an entry older than the freshness window reads as a possibly
//! lapsed friendship. Profile-overlay membership, by contrast, has real
//! revocation because the profile owner is the certificate authority for its
//! own overlay.

use thiserror::Error;

use crate::addr::{AddressSpace, NodeId};
use crate::canonical::{tags, Canonical, CanonicalError, Decoder, Encoder};
use crate::crypto::{CryptoProvider, Digest, PrivateKey, PublicKey, Signature};

/// Default freshness window for friend entries: 30 simulated days,
/// inclusive at the boundary.
pub const FRIEND_ENTRY_FRESHNESS_SECS: u64 = 30 * 24 * 3600;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdentityError {
    #[error("public info must carry at least a name or an email")]
    InvalidPublicInfo,
    #[error(transparent)]
    Encoding(#[from] CanonicalError),
}

/// Why a membership credential was not accepted.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdmissionError {
    #[error("credential does not verify against the presented certificate and owner")]
    BadCredential,
    #[error("member certificate has been revoked by the owner")]
    Revoked,
}

fn lower_trim(s: &str) -> String {
    s.trim().to_ascii_lowercase()
}

/// The searchable part of an identity. Canonical form is trimmed and
/// ASCII-lowercased, with empty affiliations dropped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicInfo {
    pub full_name: String,
    pub email: String,
    pub affiliations: Vec<String>,
    /// Overlay address where the user expects friendship requests and
    /// responses; set from the derived node id at identity creation.
    pub notification_address: NodeId,
}

impl PublicInfo {
    pub fn new(full_name: &str, email: &str, affiliations: &[&str]) -> PublicInfo {
        PublicInfo {
            full_name: full_name.to_string(),
            email: email.to_string(),
            affiliations: affiliations.iter().map(|s| s.to_string()).collect(),
            notification_address: NodeId::ZERO,
        }
    }

    pub fn canonicalize(&self) -> PublicInfo {
        PublicInfo {
            full_name: lower_trim(&self.full_name),
            email: lower_trim(&self.email),
            affiliations: self
                .affiliations
                .iter()
                .map(|a| lower_trim(a))
                .filter(|a| !a.is_empty())
                .collect(),
            notification_address: self.notification_address,
        }
    }
}

impl Canonical for PublicInfo {
    const TAG: u8 = tags::PUBLIC_INFO;

    fn encode_body(&self, enc: &mut Encoder) -> Result<(), CanonicalError> {
        enc.put_string(&self.full_name)?;
        enc.put_string(&self.email)?;
        enc.put_count(self.affiliations.len())?;
        for a in &self.affiliations {
            enc.put_string(a)?;
        }
        enc.put_node_id(self.notification_address);
        Ok(())
    }

    fn decode_body(dec: &mut Decoder) -> Result<Self, CanonicalError> {
        let full_name = dec.take_string()?;
        let email = dec.take_string()?;
        let count = dec.take_count()?;
        let mut affiliations = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            affiliations.push(dec.take_string()?);
        }
        let notification_address = dec.take_node_id()?;
        Ok(PublicInfo {
            full_name,
            email,
            affiliations,
            notification_address,
        })
    }
}

/// A signed attestation appended to the subject's certificate: "at
/// `timestamp`, the holder of `friend_cert_hash` vouched for
/// `subject_cert_hash`".
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FriendEntry {
    pub subject_cert_hash: Digest,
    pub friend_cert_hash: Digest,
    pub timestamp: u64,
    pub signature: Signature,
}

impl FriendEntry {
    /// Bytes the friend signs: subject hash, timestamp, friend hash.
    pub fn signed_payload(subject: &Digest, timestamp: u64, friend: &Digest) -> Vec<u8> {
        let mut out = Vec::with_capacity(72);
        out.extend_from_slice(&subject.0);
        out.extend_from_slice(&timestamp.to_be_bytes());
        out.extend_from_slice(&friend.0);
        out
    }
}

impl Canonical for FriendEntry {
    const TAG: u8 = tags::FRIEND_ENTRY;

    fn encode_body(&self, enc: &mut Encoder) -> Result<(), CanonicalError> {
        enc.put_digest(&self.subject_cert_hash);
        enc.put_digest(&self.friend_cert_hash);
        enc.put_u64(self.timestamp);
        enc.put_bytes(&self.signature.0)
    }

    fn decode_body(dec: &mut Decoder) -> Result<Self, CanonicalError> {
        Ok(FriendEntry {
            subject_cert_hash: dec.take_digest()?,
            friend_cert_hash: dec.take_digest()?,
            timestamp: dec.take_u64()?,
            signature: Signature(dec.take_bytes()?),
        })
    }
}

/// The self-signed portion of a certificate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertificateBody {
    pub public_info: PublicInfo,
    pub public_key: PublicKey,
    pub created_at: u64,
}

impl CertificateBody {
    pub fn canonical_bytes(&self) -> Result<Vec<u8>, CanonicalError> {
        let mut enc = Encoder::new();
        self.encode_into(&mut enc)?;
        Ok(enc.into_bytes())
    }

    fn encode_into(&self, enc: &mut Encoder) -> Result<(), CanonicalError> {
        enc.put_u8(PublicInfo::TAG);
        self.public_info.encode_body(enc)?;
        enc.put_bytes(&self.public_key.0)?;
        enc.put_u64(self.created_at);
        Ok(())
    }

    fn decode_from(dec: &mut Decoder) -> Result<Self, CanonicalError> {
        let public_info = PublicInfo::decode_from(dec)?;
        let public_key = PublicKey(dec.take_bytes()?);
        let created_at = dec.take_u64()?;
        Ok(CertificateBody {
            public_info,
            public_key,
            created_at,
        })
    }
}

/// A self-signed identity certificate with a friend-entry tail.
///
/// `cert_hash` covers the body and the self-signature only; appending,
/// reordering, or dropping friend entries never changes it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub body: CertificateBody,
    pub self_signature: Signature,
    pub friend_entries: Vec<FriendEntry>,
}

impl Certificate {
    pub fn cert_hash(&self, provider: &dyn CryptoProvider) -> Digest {
        let body = self
            .body
            .canonical_bytes()
            .expect("certificate body encoding cannot fail for in-range fields");
        let mut hashed = body;
        hashed.extend_from_slice(&(self.self_signature.0.len() as u32).to_be_bytes());
        hashed.extend_from_slice(&self.self_signature.0);
        provider.hash(&hashed)
    }

    pub fn verify_self(&self, provider: &dyn CryptoProvider) -> bool {
        match self.body.canonical_bytes() {
            Ok(bytes) => provider.verify(&self.body.public_key, &bytes, &self.self_signature),
            Err(_) => false,
        }
    }

    pub fn node_id(&self, space: AddressSpace) -> NodeId {
        space.derive_id(&self.body.public_key.0)
    }

    pub fn append_friend_entry(&mut self, entry: FriendEntry) {
        self.friend_entries.push(entry);
    }
}

impl Canonical for Certificate {
    const TAG: u8 = tags::CERTIFICATE;

    fn encode_body(&self, enc: &mut Encoder) -> Result<(), CanonicalError> {
        self.body.encode_into(enc)?;
        enc.put_bytes(&self.self_signature.0)?;
        enc.put_count(self.friend_entries.len())?;
        for e in &self.friend_entries {
            enc.put_u8(FriendEntry::TAG);
            e.encode_body(enc)?;
        }
        Ok(())
    }

    fn decode_body(dec: &mut Decoder) -> Result<Self, CanonicalError> {
        let body = CertificateBody::decode_from(dec)?;
        let self_signature = Signature(dec.take_bytes()?);
        let count = dec.take_count()?;
        let mut friend_entries = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            friend_entries.push(FriendEntry::decode_from(dec)?);
        }
        Ok(Certificate {
            body,
            self_signature,
            friend_entries,
        })
    }
}

/// Admission credential for one profile overlay, signed by the owner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemberCertificate {
    pub member_cert_hash: Digest,
    pub member_public_key: PublicKey,
    pub issued_at: u64,
    pub owner_signature: Signature,
}

impl MemberCertificate {
    pub fn signed_payload(
        member_cert_hash: &Digest,
        member_public_key: &PublicKey,
        issued_at: u64,
    ) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.put_digest(member_cert_hash);
        enc.put_bytes(&member_public_key.0)
            .expect("key length fits u32");
        enc.put_u64(issued_at);
        enc.into_bytes()
    }
}

impl Canonical for MemberCertificate {
    const TAG: u8 = tags::MEMBER_CERTIFICATE;

    fn encode_body(&self, enc: &mut Encoder) -> Result<(), CanonicalError> {
        enc.put_digest(&self.member_cert_hash);
        enc.put_bytes(&self.member_public_key.0)?;
        enc.put_u64(self.issued_at);
        enc.put_bytes(&self.owner_signature.0)
    }

    fn decode_body(dec: &mut Decoder) -> Result<Self, CanonicalError> {
        Ok(MemberCertificate {
            member_cert_hash: dec.take_digest()?,
            member_public_key: PublicKey(dec.take_bytes()?),
            issued_at: dec.take_u64()?,
            owner_signature: Signature(dec.take_bytes()?),
        })
    }
}

/// Owner-signed statement permanently barring a member certificate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RevocationRecord {
    pub revoked_cert_hash: Digest,
    pub revoked_at: u64,
    pub owner_signature: Signature,
}

impl RevocationRecord {
    pub fn signed_payload(revoked: &Digest, revoked_at: u64) -> Vec<u8> {
        let mut out = Vec::with_capacity(40);
        out.extend_from_slice(&revoked.0);
        out.extend_from_slice(&revoked_at.to_be_bytes());
        out
    }
}

impl Canonical for RevocationRecord {
    const TAG: u8 = tags::REVOCATION_RECORD;

    fn encode_body(&self, enc: &mut Encoder) -> Result<(), CanonicalError> {
        enc.put_digest(&self.revoked_cert_hash);
        enc.put_u64(self.revoked_at);
        enc.put_bytes(&self.owner_signature.0)
    }

    fn decode_body(dec: &mut Decoder) -> Result<Self, CanonicalError> {
        Ok(RevocationRecord {
            revoked_cert_hash: dec.take_digest()?,
            revoked_at: dec.take_u64()?,
            owner_signature: Signature(dec.take_bytes()?),
        })
    }
}

/// A certificate together with its private key: everything a peer is.
#[derive(Clone)]
pub struct Identity {
    pub certificate: Certificate,
    pub private_key: PrivateKey,
}

impl Identity {
    pub fn cert_hash(&self, provider: &dyn CryptoProvider) -> Digest {
        self.certificate.cert_hash(provider)
    }

    pub fn node_id(&self, space: AddressSpace) -> NodeId {
        self.certificate.node_id(space)
    }

    pub fn public_info(&self) -> &PublicInfo {
        &self.certificate.body.public_info
    }
}

/// Create a self-signed identity. The node id is `H(public_key)` reduced
/// into the address space, and it doubles as the notification address.
pub fn create_identity(
    info: PublicInfo,
    space: AddressSpace,
    provider: &dyn CryptoProvider,
    rng: &mut dyn rand::RngCore,
    now: u64,
) -> Result<Identity, IdentityError> {
    let mut canonical = info.canonicalize();
    if canonical.full_name.is_empty() && canonical.email.is_empty() {
        return Err(IdentityError::InvalidPublicInfo);
    }
    let keys = provider.generate_keypair(rng);
    canonical.notification_address = space.derive_id(&keys.public.0);
    let body = CertificateBody {
        public_info: canonical,
        public_key: keys.public,
        created_at: now,
    };
    let self_signature = provider.sign(&keys.private, &body.canonical_bytes()?);
    Ok(Identity {
        certificate: Certificate {
            body,
            self_signature,
            friend_entries: Vec::new(),
        },
        private_key: keys.private,
    })
}

/// Sign a friend entry for `subject_cert`'s tail. Appending it leaves the
/// subject's cert hash unchanged.
pub fn sign_friend_entry(
    signer: &Identity,
    subject_cert: &Certificate,
    provider: &dyn CryptoProvider,
    now: u64,
) -> FriendEntry {
    let subject_hash = subject_cert.cert_hash(provider);
    let friend_hash = signer.cert_hash(provider);
    let payload = FriendEntry::signed_payload(&subject_hash, now, &friend_hash);
    FriendEntry {
        subject_cert_hash: subject_hash,
        friend_cert_hash: friend_hash,
        timestamp: now,
        signature: provider.sign(&signer.private_key, &payload),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FriendEntryStatus {
    /// Signature good and within the freshness window (inclusive).
    ValidFresh,
    /// Signature good but aged past the window; the friendship may have
    /// lapsed.
    ValidStale,
    Invalid,
}

pub fn verify_friend_entry(
    entry: &FriendEntry,
    subject_cert: &Certificate,
    friend_cert: &Certificate,
    provider: &dyn CryptoProvider,
    now: u64,
    freshness_window: u64,
) -> FriendEntryStatus {
    if entry.subject_cert_hash != subject_cert.cert_hash(provider)
        || entry.friend_cert_hash != friend_cert.cert_hash(provider)
    {
        return FriendEntryStatus::Invalid;
    }
    let payload = FriendEntry::signed_payload(
        &entry.subject_cert_hash,
        entry.timestamp,
        &entry.friend_cert_hash,
    );
    if !provider.verify(&friend_cert.body.public_key, &payload, &entry.signature) {
        return FriendEntryStatus::Invalid;
    }
    if now.saturating_sub(entry.timestamp) <= freshness_window {
        FriendEntryStatus::ValidFresh
    } else {
        FriendEntryStatus::ValidStale
    }
}

/// Issue an admission credential for `friend_cert` into the owner's profile
/// overlay.
pub fn issue_member_cert(
    owner: &Identity,
    friend_cert: &Certificate,
    provider: &dyn CryptoProvider,
    now: u64,
) -> MemberCertificate {
    let member_cert_hash = friend_cert.cert_hash(provider);
    let member_public_key = friend_cert.body.public_key.clone();
    let payload = MemberCertificate::signed_payload(&member_cert_hash, &member_public_key, now);
    MemberCertificate {
        member_cert_hash,
        member_public_key,
        issued_at: now,
        owner_signature: provider.sign(&owner.private_key, &payload),
    }
}

/// Check an admission credential against the certificate presenting it, the
/// owner's certificate, and the set of revoked certificate hashes.
pub fn verify_chain(
    credential: &MemberCertificate,
    presented: &Certificate,
    owner_cert: &Certificate,
    revoked: &std::collections::BTreeSet<Digest>,
    provider: &dyn CryptoProvider,
) -> Result<(), AdmissionError> {
    if revoked.contains(&credential.member_cert_hash) {
        return Err(AdmissionError::Revoked);
    }
    if credential.member_cert_hash != presented.cert_hash(provider)
        || credential.member_public_key != presented.body.public_key
    {
        return Err(AdmissionError::BadCredential);
    }
    let payload = MemberCertificate::signed_payload(
        &credential.member_cert_hash,
        &credential.member_public_key,
        credential.issued_at,
    );
    if !provider.verify(
        &owner_cert.body.public_key,
        &payload,
        &credential.owner_signature,
    ) {
        return Err(AdmissionError::BadCredential);
    }
    Ok(())
}

/// Produce a revocation record for a member certificate hash. Revoking the
/// same hash again yields an equivalent (equally valid) record.
pub fn revoke_member(
    owner: &Identity,
    member_cert_hash: Digest,
    provider: &dyn CryptoProvider,
    now: u64,
) -> RevocationRecord {
    let payload = RevocationRecord::signed_payload(&member_cert_hash, now);
    RevocationRecord {
        revoked_cert_hash: member_cert_hash,
        revoked_at: now,
        owner_signature: provider.sign(&owner.private_key, &payload),
    }
}

pub fn verify_revocation(
    record: &RevocationRecord,
    owner_cert: &Certificate,
    provider: &dyn CryptoProvider,
) -> bool {
    let payload = RevocationRecord::signed_payload(&record.revoked_cert_hash, record.revoked_at);
    provider.verify(
        &owner_cert.body.public_key,
        &payload,
        &record.owner_signature,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::TestCrypto;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::BTreeSet;

    fn space() -> AddressSpace {
        AddressSpace::new(64).unwrap()
    }

    fn identity(seed: u64, name: &str) -> Identity {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        create_identity(
            PublicInfo::new(name, &format!("{name}@example.org"), &["p2p"]),
            space(),
            &TestCrypto,
            &mut rng,
            1_000,
        )
        .unwrap()
    }

    #[test]
    fn same_seed_gives_identical_certificate_bytes() {
        let a = identity(7, "Alice Smith");
        let b = identity(7, "Alice Smith");
        assert_eq!(
            a.certificate.canonical_bytes().unwrap(),
            b.certificate.canonical_bytes().unwrap()
        );
    }

    #[test]
    fn created_certificate_self_verifies() {
        let a = identity(1, "Alice Smith");
        assert!(a.certificate.verify_self(&TestCrypto));
    }

    #[test]
    fn mutated_body_breaks_self_signature() {
        let mut a = identity(1, "Alice Smith");
        a.certificate.body.created_at += 1;
        assert!(!a.certificate.verify_self(&TestCrypto));
    }

    #[test]
    fn needs_name_or_email() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let err = create_identity(
            PublicInfo::new("  ", "", &["somewhere"]),
            space(),
            &TestCrypto,
            &mut rng,
            0,
        );
        assert_eq!(err.err(), Some(IdentityError::InvalidPublicInfo));
        let ok = create_identity(
            PublicInfo::new("", "a@b.c", &[]),
            space(),
            &TestCrypto,
            &mut rng,
            0,
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn cert_hash_ignores_friend_entries() {
        let mut alice = identity(1, "Alice Smith");
        let bob = identity(2, "Bob Jones");
        let before = alice.cert_hash(&TestCrypto);
        let entry = sign_friend_entry(&bob, &alice.certificate, &TestCrypto, 2_000);
        alice.certificate.append_friend_entry(entry.clone());
        assert_eq!(alice.cert_hash(&TestCrypto), before);
        alice.certificate.append_friend_entry(entry);
        alice.certificate.friend_entries.reverse();
        assert_eq!(alice.cert_hash(&TestCrypto), before);
        alice.certificate.friend_entries.clear();
        assert_eq!(alice.cert_hash(&TestCrypto), before);
    }

    #[test]
    fn friend_entry_verifies_and_ages() {
        let alice = identity(1, "Alice Smith");
        let bob = identity(2, "Bob Jones");
        let window = FRIEND_ENTRY_FRESHNESS_SECS;
        let entry = sign_friend_entry(&bob, &alice.certificate, &TestCrypto, 5_000);
        let check = |now| {
            verify_friend_entry(
                &entry,
                &alice.certificate,
                &bob.certificate,
                &TestCrypto,
                now,
                window,
            )
        };
        assert_eq!(check(5_000), FriendEntryStatus::ValidFresh);
        // Inclusive boundary: age exactly equal to the window is fresh.
        assert_eq!(check(5_000 + window), FriendEntryStatus::ValidFresh);
        assert_eq!(check(5_000 + window + 1), FriendEntryStatus::ValidStale);
    }

    #[test]
    fn friend_entry_against_wrong_friend_is_invalid() {
        let alice = identity(1, "Alice Smith");
        let bob = identity(2, "Bob Jones");
        let carol = identity(3, "Carol White");
        let entry = sign_friend_entry(&bob, &alice.certificate, &TestCrypto, 5_000);
        assert_eq!(
            verify_friend_entry(
                &entry,
                &alice.certificate,
                &carol.certificate,
                &TestCrypto,
                5_000,
                FRIEND_ENTRY_FRESHNESS_SECS,
            ),
            FriendEntryStatus::Invalid
        );
    }

    #[test]
    fn member_credential_chain() {
        let owner = identity(1, "Alice Smith");
        let friend = identity(2, "Bob Jones");
        let outsider = identity(3, "Carol White");
        let cred = issue_member_cert(&owner, &friend.certificate, &TestCrypto, 9_000);
        let none = BTreeSet::new();
        assert!(
            verify_chain(&cred, &friend.certificate, &owner.certificate, &none, &TestCrypto)
                .is_ok()
        );
        // Presented by someone else's certificate: reject.
        assert_eq!(
            verify_chain(&cred, &outsider.certificate, &owner.certificate, &none, &TestCrypto),
            Err(AdmissionError::BadCredential)
        );
        // After revocation: reject, permanently.
        let mut revoked = BTreeSet::new();
        revoked.insert(cred.member_cert_hash);
        assert_eq!(
            verify_chain(&cred, &friend.certificate, &owner.certificate, &revoked, &TestCrypto),
            Err(AdmissionError::Revoked)
        );
    }

    #[test]
    fn revocation_record_signature_matters() {
        let owner = identity(1, "Alice Smith");
        let impostor = identity(4, "Mallory Gray");
        let friend = identity(2, "Bob Jones");
        let hash = friend.cert_hash(&TestCrypto);
        let good = revoke_member(&owner, hash, &TestCrypto, 10_000);
        assert!(verify_revocation(&good, &owner.certificate, &TestCrypto));
        let forged = revoke_member(&impostor, hash, &TestCrypto, 10_000);
        assert!(!verify_revocation(&forged, &owner.certificate, &TestCrypto));
        // Revoking an unknown hash still yields a valid record.
        let unknown = revoke_member(&owner, Digest([9; 32]), &TestCrypto, 10_000);
        assert!(verify_revocation(&unknown, &owner.certificate, &TestCrypto));
    }

    #[test]
    fn canonicalization_merges_case_variants() {
        let a = PublicInfo::new("Alice Smith", "A@X.org", &["  ACM "]).canonicalize();
        let b = PublicInfo::new("ALICE smith", "a@x.ORG", &["acm"]).canonicalize();
        assert_eq!(a.canonical_bytes().unwrap(), b.canonical_bytes().unwrap());
    }

    #[test]
    fn certificate_round_trips_through_canonical_bytes() {
        let mut alice = identity(1, "Alice Smith");
        let bob = identity(2, "Bob Jones");
        let entry = sign_friend_entry(&bob, &alice.certificate, &TestCrypto, 2_000);
        alice.certificate.append_friend_entry(entry);
        let bytes = alice.certificate.canonical_bytes().unwrap();
        let decoded = Certificate::from_canonical_bytes(&bytes).unwrap();
        assert_eq!(decoded, alice.certificate);
        assert_eq!(decoded.canonical_bytes().unwrap(), bytes);
    }
}
