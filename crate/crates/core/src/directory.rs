//! The public directory overlay's application layer: publishing and
//! searching directory entries, the friendship request/response protocol
//! over DHT mailboxes, and active-peer lists used to bootstrap profile
//! overlays.
//!
//! Key derivation is normative: searchable fields are canonicalized
//! (trimmed, ASCII-lowercased) and hashed under a namespace prefix, e.g.
//! `H("dir:name:" || name)`. Friendship requests and responses share the
//! receiver's notification-address mailbox and are told apart by their
//! record tags. See `docs/FORMATS.md` for the full table.

use thiserror::Error;

use crate::addr::NodeId;
use crate::canonical::{tags, Canonical, CanonicalError, Decoder, Encoder};
use crate::crypto::{CryptoProvider, Digest, Signature};
use crate::dht::{Dht, DhtError, DhtKey};
use crate::identity::{
    issue_member_cert, sign_friend_entry, Certificate, FriendEntry, Identity, MemberCertificate,
    PublicInfo,
};

pub const DIR_NAME_PREFIX: &str = "dir:name:";
pub const DIR_EMAIL_PREFIX: &str = "dir:email:";
pub const DIR_AFFIL_PREFIX: &str = "dir:affil:";
pub const ACTIVE_PREFIX: &str = "active:";

/// Directory entries live for 7 simulated days.
pub const DIRECTORY_ENTRY_TTL_SECS: f64 = 7.0 * 24.0 * 3600.0;
/// Active-peer records are heartbeats: 120 simulated seconds.
pub const ACTIVE_PEER_TTL_SECS: f64 = 120.0;
/// Friendship requests (and responses) wait up to 30 simulated days.
pub const FRIEND_REQUEST_TTL_SECS: f64 = 30.0 * 24.0 * 3600.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DirectoryError {
    #[error("query has no non-empty field")]
    EmptyQuery,
    #[error("certificate failed self-verification")]
    BadCertificate,
    #[error("friendship request failed verification")]
    InvalidRequest,
    #[error(transparent)]
    Dht(#[from] DhtError),
    #[error(transparent)]
    Encoding(#[from] CanonicalError),
}

/// A signed request for friendship, stored in the receiver's DHT mailbox.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FriendshipRequest {
    pub requester_cert: Certificate,
    pub receiver_public_info: PublicInfo,
    pub timestamp: u64,
    pub signature: Signature,
}

impl FriendshipRequest {
    pub fn new(
        requester: &Identity,
        receiver_info: &PublicInfo,
        provider: &dyn CryptoProvider,
        now: u64,
    ) -> Result<FriendshipRequest, CanonicalError> {
        let receiver_public_info = receiver_info.canonicalize();
        let payload = Self::signed_payload(
            &requester.cert_hash(provider),
            &receiver_public_info,
            now,
        )?;
        Ok(FriendshipRequest {
            requester_cert: requester.certificate.clone(),
            receiver_public_info,
            timestamp: now,
            signature: provider.sign(&requester.private_key, &payload),
        })
    }

    pub fn signed_payload(
        requester_cert_hash: &Digest,
        receiver_info: &PublicInfo,
        timestamp: u64,
    ) -> Result<Vec<u8>, CanonicalError> {
        let mut out = Vec::new();
        out.extend_from_slice(&requester_cert_hash.0);
        out.extend_from_slice(&receiver_info.canonical_bytes()?);
        out.extend_from_slice(&timestamp.to_be_bytes());
        Ok(out)
    }

    pub fn verify(&self, provider: &dyn CryptoProvider) -> bool {
        if !self.requester_cert.verify_self(provider) {
            return false;
        }
        let Ok(payload) = Self::signed_payload(
            &self.requester_cert.cert_hash(provider),
            &self.receiver_public_info,
            self.timestamp,
        ) else {
            return false;
        };
        provider.verify(
            &self.requester_cert.body.public_key,
            &payload,
            &self.signature,
        )
    }
}

impl Canonical for FriendshipRequest {
    const TAG: u8 = tags::FRIENDSHIP_REQUEST;

    fn encode_body(&self, enc: &mut Encoder) -> Result<(), CanonicalError> {
        enc.put_u8(Certificate::TAG);
        self.requester_cert.encode_body(enc)?;
        enc.put_u8(PublicInfo::TAG);
        self.receiver_public_info.encode_body(enc)?;
        enc.put_u64(self.timestamp);
        enc.put_bytes(&self.signature.0)
    }

    fn decode_body(dec: &mut Decoder) -> Result<Self, CanonicalError> {
        Ok(FriendshipRequest {
            requester_cert: Certificate::decode_from(dec)?,
            receiver_public_info: PublicInfo::decode_from(dec)?,
            timestamp: dec.take_u64()?,
            signature: Signature(dec.take_bytes()?),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FriendshipDecision {
    UnconditionalAccept,
    ConditionalAccept,
    Reject,
}

/// The receiver's answer. Structure depends on the decision:
///
/// * unconditional accept - signed friend entry, counter-request, and the
///   owner-signed membership credential for the receiver's profile overlay;
/// * conditional accept - counter-request only (signing waits until the
///   receiver has inspected the requester's profile);
/// * reject - nothing; rejects are silent and never stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FriendshipResponse {
    pub decision: FriendshipDecision,
    pub signed_friend_entry: Option<FriendEntry>,
    pub counter_request: Option<FriendshipRequest>,
    pub member_credential: Option<MemberCertificate>,
}

impl FriendshipResponse {
    /// The structural invariants tied to each decision.
    pub fn structurally_valid(&self) -> bool {
        match self.decision {
            FriendshipDecision::UnconditionalAccept => {
                self.signed_friend_entry.is_some() && self.counter_request.is_some()
            }
            FriendshipDecision::ConditionalAccept => {
                self.signed_friend_entry.is_none() && self.counter_request.is_some()
            }
            FriendshipDecision::Reject => {
                self.signed_friend_entry.is_none()
                    && self.counter_request.is_none()
                    && self.member_credential.is_none()
            }
        }
    }
}

impl Canonical for FriendshipResponse {
    const TAG: u8 = tags::FRIENDSHIP_RESPONSE;

    fn encode_body(&self, enc: &mut Encoder) -> Result<(), CanonicalError> {
        enc.put_u8(match self.decision {
            FriendshipDecision::UnconditionalAccept => 0,
            FriendshipDecision::ConditionalAccept => 1,
            FriendshipDecision::Reject => 2,
        });
        encode_option(enc, &self.signed_friend_entry)?;
        encode_option(enc, &self.counter_request)?;
        encode_option(enc, &self.member_credential)
    }

    fn decode_body(dec: &mut Decoder) -> Result<Self, CanonicalError> {
        let decision = match dec.take_u8()? {
            0 => FriendshipDecision::UnconditionalAccept,
            1 => FriendshipDecision::ConditionalAccept,
            2 => FriendshipDecision::Reject,
            other => return Err(CanonicalError::BadDiscriminant(other)),
        };
        Ok(FriendshipResponse {
            decision,
            signed_friend_entry: decode_option(dec)?,
            counter_request: decode_option(dec)?,
            member_credential: decode_option(dec)?,
        })
    }
}

fn encode_option<T: Canonical>(enc: &mut Encoder, v: &Option<T>) -> Result<(), CanonicalError> {
    match v {
        None => {
            enc.put_u8(0);
            Ok(())
        }
        Some(value) => {
            enc.put_u8(1);
            enc.put_u8(T::TAG);
            value.encode_body(enc)
        }
    }
}

fn decode_option<T: Canonical>(dec: &mut Decoder) -> Result<Option<T>, CanonicalError> {
    match dec.take_u8()? {
        0 => Ok(None),
        1 => Ok(Some(T::decode_from(dec)?)),
        other => Err(CanonicalError::BadDiscriminant(other)),
    }
}

/// Short-lived "I am online in this profile overlay" heartbeat.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivePeerRecord {
    pub profile_owner_cert_hash: Digest,
    pub node_id: NodeId,
    pub published_at: u64,
}

impl Canonical for ActivePeerRecord {
    const TAG: u8 = tags::ACTIVE_PEER_RECORD;

    fn encode_body(&self, enc: &mut Encoder) -> Result<(), CanonicalError> {
        enc.put_digest(&self.profile_owner_cert_hash);
        enc.put_node_id(self.node_id);
        enc.put_u64(self.published_at);
        Ok(())
    }

    fn decode_body(dec: &mut Decoder) -> Result<Self, CanonicalError> {
        Ok(ActivePeerRecord {
            profile_owner_cert_hash: dec.take_digest()?,
            node_id: dec.take_node_id()?,
            published_at: dec.take_u64()?,
        })
    }
}

fn prefixed_key(dht: &Dht, prefix: &str, rest: &[u8]) -> DhtKey {
    let mut bytes = prefix.as_bytes().to_vec();
    bytes.extend_from_slice(rest);
    DhtKey::from_bytes(dht.space(), &bytes)
}

/// One DHT key per non-empty searchable field of (canonicalized) `info`.
pub fn derive_directory_keys(dht: &Dht, info: &PublicInfo) -> Vec<DhtKey> {
    let info = info.canonicalize();
    let mut keys = Vec::new();
    if !info.full_name.is_empty() {
        keys.push(prefixed_key(dht, DIR_NAME_PREFIX, info.full_name.as_bytes()));
    }
    if !info.email.is_empty() {
        keys.push(prefixed_key(dht, DIR_EMAIL_PREFIX, info.email.as_bytes()));
    }
    for affiliation in &info.affiliations {
        keys.push(prefixed_key(dht, DIR_AFFIL_PREFIX, affiliation.as_bytes()));
    }
    keys
}

pub fn mailbox_key(dht: &Dht, address: NodeId) -> DhtKey {
    DhtKey::from_address(dht.space(), address)
}

pub fn active_key(dht: &Dht, owner_cert_hash: &Digest) -> DhtKey {
    prefixed_key(dht, ACTIVE_PREFIX, &owner_cert_hash.0)
}

/// Store the certificate under every derived directory key.
pub fn publish_directory_entry(
    dht: &mut Dht,
    from: NodeId,
    cert: &Certificate,
    provider: &dyn CryptoProvider,
    now: f64,
) -> Result<usize, DirectoryError> {
    if !cert.verify_self(provider) {
        return Err(DirectoryError::BadCertificate);
    }
    let value = cert.canonical_bytes()?;
    let mut messages = 0;
    for key in derive_directory_keys(dht, &cert.body.public_info) {
        messages += dht
            .put(from, key, &value, DIRECTORY_ENTRY_TTL_SECS, now)?
            .messages;
    }
    Ok(messages)
}

/// A partial-info query; `None` or empty fields are ignored, present fields
/// must all match (AND semantics).
#[derive(Clone, Debug, Default)]
pub struct DirectoryQuery {
    pub full_name: Option<String>,
    pub email: Option<String>,
    pub affiliation: Option<String>,
}

impl DirectoryQuery {
    pub fn by_name(name: &str) -> DirectoryQuery {
        DirectoryQuery {
            full_name: Some(name.to_string()),
            ..DirectoryQuery::default()
        }
    }

    fn canonicalized(&self) -> DirectoryQuery {
        let clean = |v: &Option<String>| {
            v.as_deref()
                .map(|s| s.trim().to_ascii_lowercase())
                .filter(|s| !s.is_empty())
        };
        DirectoryQuery {
            full_name: clean(&self.full_name),
            email: clean(&self.email),
            affiliation: clean(&self.affiliation),
        }
    }

    fn matches(&self, info: &PublicInfo) -> bool {
        let info = info.canonicalize();
        if let Some(name) = &self.full_name {
            if info.full_name != *name {
                return false;
            }
        }
        if let Some(email) = &self.email {
            if info.email != *email {
                return false;
            }
        }
        if let Some(affiliation) = &self.affiliation {
            if !info.affiliations.contains(affiliation) {
                return false;
            }
        }
        true
    }
}

/// Fetch every queried field's key and return the self-verifying
/// certificates matching all non-empty fields. Ranking is the caller's
/// problem; results are sorted by certificate hash for determinism.
pub fn search_directory(
    dht: &mut Dht,
    from: NodeId,
    query: &DirectoryQuery,
    provider: &dyn CryptoProvider,
    now: f64,
) -> Result<Vec<Certificate>, DirectoryError> {
    let query = query.canonicalized();
    let mut keys = Vec::new();
    if let Some(name) = &query.full_name {
        keys.push(prefixed_key(dht, DIR_NAME_PREFIX, name.as_bytes()));
    }
    if let Some(email) = &query.email {
        keys.push(prefixed_key(dht, DIR_EMAIL_PREFIX, email.as_bytes()));
    }
    if let Some(affiliation) = &query.affiliation {
        keys.push(prefixed_key(dht, DIR_AFFIL_PREFIX, affiliation.as_bytes()));
    }
    if keys.is_empty() {
        return Err(DirectoryError::EmptyQuery);
    }

    let mut results: std::collections::BTreeMap<Digest, Certificate> =
        std::collections::BTreeMap::new();
    for key in keys {
        for value in dht.get(from, key, now)?.values {
            let Ok(cert) = Certificate::from_canonical_bytes(&value) else {
                continue;
            };
            if !cert.verify_self(provider) || !query.matches(&cert.body.public_info) {
                continue;
            }
            let hash = cert.cert_hash(provider);
            // Republished certificates differ only in their friend-entry
            // tail; keep the version with the most attestations.
            results
                .entry(hash)
                .and_modify(|existing| {
                    if cert.friend_entries.len() > existing.friend_entries.len() {
                        *existing = cert.clone();
                    }
                })
                .or_insert(cert);
        }
    }
    Ok(results.into_values().collect())
}

/// Drop a signed friendship request into the receiver's mailbox.
pub fn send_friend_request(
    dht: &mut Dht,
    from: NodeId,
    requester: &Identity,
    receiver_cert: &Certificate,
    provider: &dyn CryptoProvider,
    now: f64,
) -> Result<usize, DirectoryError> {
    let request = FriendshipRequest::new(
        requester,
        &receiver_cert.body.public_info,
        provider,
        now as u64,
    )?;
    let key = mailbox_key(dht, receiver_cert.body.public_info.notification_address);
    let receipt = dht.put(
        from,
        key,
        &request.canonical_bytes()?,
        FRIEND_REQUEST_TTL_SECS,
        now,
    )?;
    Ok(receipt.messages)
}

/// All unexpired, signature-valid requests addressed to this receiver.
/// Requests whose embedded receiver info does not match the receiver's
/// canonical info are dropped (notification-address collisions).
pub fn check_requests(
    dht: &mut Dht,
    from: NodeId,
    receiver: &Identity,
    provider: &dyn CryptoProvider,
    now: f64,
) -> Result<Vec<FriendshipRequest>, DirectoryError> {
    let key = mailbox_key(dht, receiver.public_info().notification_address);
    let own_info = receiver.public_info().canonicalize();
    let mut requests = Vec::new();
    for value in dht.get(from, key, now)?.values {
        let Ok(request) = FriendshipRequest::from_canonical_bytes(&value) else {
            continue; // responses and tampered values share this mailbox
        };
        if !request.verify(provider) {
            continue;
        }
        if request.receiver_public_info.canonicalize() != own_info {
            continue;
        }
        requests.push(request);
    }
    requests.sort_by(|a, b| {
        (a.timestamp, a.requester_cert.cert_hash(provider))
            .cmp(&(b.timestamp, b.requester_cert.cert_hash(provider)))
    });
    Ok(requests)
}

/// Answer a verified request. Accept variants are stored in the requester's
/// mailbox; rejects are silent (nothing is stored anywhere).
pub fn respond_to_request(
    dht: &mut Dht,
    from: NodeId,
    receiver: &Identity,
    request: &FriendshipRequest,
    decision: FriendshipDecision,
    provider: &dyn CryptoProvider,
    now: f64,
) -> Result<FriendshipResponse, DirectoryError> {
    if !request.verify(provider) {
        return Err(DirectoryError::InvalidRequest);
    }
    let response = match decision {
        FriendshipDecision::Reject => FriendshipResponse {
            decision,
            signed_friend_entry: None,
            counter_request: None,
            member_credential: None,
        },
        FriendshipDecision::ConditionalAccept => FriendshipResponse {
            decision,
            signed_friend_entry: None,
            counter_request: Some(FriendshipRequest::new(
                receiver,
                &request.requester_cert.body.public_info,
                provider,
                now as u64,
            )?),
            member_credential: None,
        },
        FriendshipDecision::UnconditionalAccept => FriendshipResponse {
            decision,
            signed_friend_entry: Some(sign_friend_entry(
                receiver,
                &request.requester_cert,
                provider,
                now as u64,
            )),
            counter_request: Some(FriendshipRequest::new(
                receiver,
                &request.requester_cert.body.public_info,
                provider,
                now as u64,
            )?),
            member_credential: Some(issue_member_cert(
                receiver,
                &request.requester_cert,
                provider,
                now as u64,
            )),
        },
    };
    debug_assert!(response.structurally_valid());
    if decision != FriendshipDecision::Reject {
        let key = mailbox_key(
            dht,
            request
                .requester_cert
                .body
                .public_info
                .notification_address,
        );
        dht.put(
            from,
            key,
            &response.canonical_bytes()?,
            FRIEND_REQUEST_TTL_SECS,
            now,
        )?;
    }
    Ok(response)
}

/// Responses waiting in the requester's own mailbox. Each surviving
/// response carries a verified counter-request addressed to the requester;
/// friend entries and credentials inside are checked against the
/// responder's certificate.
pub fn check_responses(
    dht: &mut Dht,
    from: NodeId,
    requester: &Identity,
    provider: &dyn CryptoProvider,
    now: f64,
) -> Result<Vec<FriendshipResponse>, DirectoryError> {
    let key = mailbox_key(dht, requester.public_info().notification_address);
    let own_info = requester.public_info().canonicalize();
    let own_hash = requester.cert_hash(provider);
    let mut responses = Vec::new();
    for value in dht.get(from, key, now)?.values {
        let Ok(response) = FriendshipResponse::from_canonical_bytes(&value) else {
            continue;
        };
        if !response.structurally_valid() {
            continue;
        }
        let Some(counter) = &response.counter_request else {
            continue; // rejects are never stored; a bare record is noise
        };
        if !counter.verify(provider) {
            continue;
        }
        if counter.receiver_public_info.canonicalize() != own_info {
            continue;
        }
        if let Some(entry) = &response.signed_friend_entry {
            let status = crate::identity::verify_friend_entry(
                entry,
                &requester.certificate,
                &counter.requester_cert,
                provider,
                now as u64,
                crate::identity::FRIEND_ENTRY_FRESHNESS_SECS,
            );
            if status == crate::identity::FriendEntryStatus::Invalid {
                continue;
            }
        }
        if let Some(credential) = &response.member_credential {
            if credential.member_cert_hash != own_hash {
                continue;
            }
            let payload = MemberCertificate::signed_payload(
                &credential.member_cert_hash,
                &credential.member_public_key,
                credential.issued_at,
            );
            if !provider.verify(
                &counter.requester_cert.body.public_key,
                &payload,
                &credential.owner_signature,
            ) {
                continue;
            }
        }
        responses.push(response);
    }
    responses.sort_by_key(|r| {
        r.counter_request
            .as_ref()
            .map(|c| (c.timestamp, c.requester_cert.cert_hash(provider)))
    });
    Ok(responses)
}

/// Publish "this node is online in that profile overlay" with a short TTL.
pub fn publish_active(
    dht: &mut Dht,
    from: NodeId,
    profile_owner_cert_hash: &Digest,
    now: f64,
) -> Result<usize, DirectoryError> {
    let record = ActivePeerRecord {
        profile_owner_cert_hash: *profile_owner_cert_hash,
        node_id: from,
        published_at: now as u64,
    };
    let key = active_key(dht, profile_owner_cert_hash);
    let receipt = dht.put(
        from,
        key,
        &record.canonical_bytes()?,
        ACTIVE_PEER_TTL_SECS,
        now,
    )?;
    Ok(receipt.messages)
}

/// Unexpired node ids advertised for a profile overlay. Unverified by
/// design: a bogus entry is useless because the profile handshake rejects
/// peers without a valid owner-signed credential.
pub fn lookup_active(
    dht: &mut Dht,
    from: NodeId,
    profile_owner_cert_hash: &Digest,
    now: f64,
) -> Result<(Vec<NodeId>, usize), DirectoryError> {
    let key = active_key(dht, profile_owner_cert_hash);
    let result = dht.get(from, key, now)?;
    let mut nodes = Vec::new();
    for value in result.values {
        let Ok(record) = ActivePeerRecord::from_canonical_bytes(&value) else {
            continue;
        };
        if record.profile_owner_cert_hash == *profile_owner_cert_hash {
            nodes.push(record.node_id);
        }
    }
    nodes.sort();
    nodes.dedup();
    Ok((nodes, result.messages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addr::AddressSpace;
    use crate::crypto::TestCrypto;
    use crate::dht::DhtConfig;
    use crate::identity::create_identity;
    use crate::overlay::{Overlay, OverlayId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Fixture {
        dht: Dht,
        alice: Identity,
        bob: Identity,
        carol: Identity,
    }

    fn fixture() -> Fixture {
        let space = AddressSpace::new(32).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let mk = |rng: &mut ChaCha20Rng, name: &str, email: &str, affils: &[&str]| {
            create_identity(
                PublicInfo::new(name, email, affils),
                space,
                &TestCrypto,
                rng,
                100,
            )
            .unwrap()
        };
        let alice = mk(&mut rng, "Alice Smith", "alice@x.org", &["acm"]);
        let bob = mk(&mut rng, "Bob Jones", "bob@x.org", &["acm", "ieee"]);
        let carol = mk(&mut rng, "Carol White", "carol@y.org", &[]);
        let ids: Vec<NodeId> = [&alice, &bob, &carol]
            .iter()
            .map(|p| p.node_id(space))
            .chain((0..12u64).map(|i| space.id_from_u64(i * 104_729 + 17)))
            .collect();
        let overlay = Overlay::bulk_build(OverlayId::Directory, space, &ids).unwrap();
        Fixture {
            dht: Dht::new(overlay, DhtConfig::default()),
            alice,
            bob,
            carol,
        }
    }

    #[test]
    fn directory_keys_are_case_insensitive() {
        let f = fixture();
        let a = derive_directory_keys(&f.dht, &PublicInfo::new("Alice Smith", "", &[]));
        let b = derive_directory_keys(&f.dht, &PublicInfo::new("ALICE smith", "", &[]));
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn no_affiliations_no_affiliation_keys() {
        let f = fixture();
        let keys = derive_directory_keys(&f.dht, &PublicInfo::new("A", "a@b.c", &[]));
        assert_eq!(keys.len(), 2);
    }

    #[test]
    fn key_matches_independent_hash_oracle() {
        let f = fixture();
        let keys = derive_directory_keys(&f.dht, &PublicInfo::new("Alice Smith", "", &[]));
        // Oracle: recompute the hash by hand from the documented formula.
        let expect = f.dht.space().derive_id(b"dir:name:alice smith");
        assert_eq!(keys[0].node_id(), expect);
    }

    #[test]
    fn publish_then_search_by_name() {
        let mut f = fixture();
        let node = f.alice.node_id(f.dht.space());
        publish_directory_entry(&mut f.dht, node, &f.alice.certificate, &TestCrypto, 0.0).unwrap();
        let results = search_directory(
            &mut f.dht,
            node,
            &DirectoryQuery::by_name("alice smith"),
            &TestCrypto,
            1.0,
        )
        .unwrap();
        assert_eq!(results, vec![f.alice.certificate.clone()]);
    }

    #[test]
    fn overlapping_names_return_both_certificates() {
        let mut f = fixture();
        let space = f.dht.space();
        let mut rng = ChaCha20Rng::seed_from_u64(1234);
        let alice2 = create_identity(
            PublicInfo::new("alice smith", "other@z.org", &[]),
            space,
            &TestCrypto,
            &mut rng,
            100,
        )
        .unwrap();
        let node = f.alice.node_id(space);
        publish_directory_entry(&mut f.dht, node, &f.alice.certificate, &TestCrypto, 0.0).unwrap();
        publish_directory_entry(&mut f.dht, node, &alice2.certificate, &TestCrypto, 0.0).unwrap();
        let results = search_directory(
            &mut f.dht,
            node,
            &DirectoryQuery::by_name("Alice Smith"),
            &TestCrypto,
            1.0,
        )
        .unwrap();
        assert_eq!(results.len(), 2);
    }

    #[test]
    fn republishing_does_not_duplicate() {
        let mut f = fixture();
        let node = f.alice.node_id(f.dht.space());
        for _ in 0..3 {
            publish_directory_entry(&mut f.dht, node, &f.alice.certificate, &TestCrypto, 0.0)
                .unwrap();
        }
        let results = search_directory(
            &mut f.dht,
            node,
            &DirectoryQuery::by_name("alice smith"),
            &TestCrypto,
            1.0,
        )
        .unwrap();
        assert_eq!(results.len(), 1);
    }

    #[test]
    fn search_uses_and_semantics() {
        let mut f = fixture();
        let node = f.alice.node_id(f.dht.space());
        publish_directory_entry(&mut f.dht, node, &f.alice.certificate, &TestCrypto, 0.0).unwrap();
        let query = DirectoryQuery {
            full_name: Some("alice smith".into()),
            email: Some("wrong@x.org".into()),
            affiliation: None,
        };
        assert!(search_directory(&mut f.dht, node, &query, &TestCrypto, 1.0)
            .unwrap()
            .is_empty());
        let query = DirectoryQuery {
            full_name: Some("alice smith".into()),
            email: Some("alice@x.org".into()),
            affiliation: Some("acm".into()),
        };
        assert_eq!(
            search_directory(&mut f.dht, node, &query, &TestCrypto, 1.0)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn search_for_unknown_name_is_empty_and_empty_query_errors() {
        let mut f = fixture();
        let node = f.alice.node_id(f.dht.space());
        assert!(search_directory(
            &mut f.dht,
            node,
            &DirectoryQuery::by_name("nobody here"),
            &TestCrypto,
            0.0
        )
        .unwrap()
        .is_empty());
        assert_eq!(
            search_directory(&mut f.dht, node, &DirectoryQuery::default(), &TestCrypto, 0.0),
            Err(DirectoryError::EmptyQuery)
        );
    }

    #[test]
    fn friend_request_reaches_receiver() {
        let mut f = fixture();
        let space = f.dht.space();
        let a = f.alice.node_id(space);
        let b = f.bob.node_id(space);
        send_friend_request(&mut f.dht, a, &f.alice, &f.bob.certificate, &TestCrypto, 5.0)
            .unwrap();
        let requests = check_requests(&mut f.dht, b, &f.bob, &TestCrypto, 6.0).unwrap();
        assert_eq!(requests.len(), 1);
        assert_eq!(requests[0].requester_cert, f.alice.certificate);
        // Duplicate sends surface once.
        send_friend_request(&mut f.dht, a, &f.alice, &f.bob.certificate, &TestCrypto, 5.0)
            .unwrap();
        assert_eq!(
            check_requests(&mut f.dht, b, &f.bob, &TestCrypto, 7.0)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn tampered_request_is_dropped() {
        let mut f = fixture();
        let space = f.dht.space();
        let a = f.alice.node_id(space);
        let b = f.bob.node_id(space);
        let mut request =
            FriendshipRequest::new(&f.alice, f.bob.public_info(), &TestCrypto, 5).unwrap();
        request.timestamp += 1; // breaks the signature
        let key = mailbox_key(&f.dht, f.bob.public_info().notification_address);
        f.dht
            .put(a, key, &request.canonical_bytes().unwrap(), 100.0, 5.0)
            .unwrap();
        assert!(check_requests(&mut f.dht, b, &f.bob, &TestCrypto, 6.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn mismatched_receiver_info_is_dropped() {
        let mut f = fixture();
        let space = f.dht.space();
        let a = f.alice.node_id(space);
        let b = f.bob.node_id(space);
        // Addressed to Bob's mailbox but describing Carol: a collision guard.
        let request =
            FriendshipRequest::new(&f.alice, f.carol.public_info(), &TestCrypto, 5).unwrap();
        let key = mailbox_key(&f.dht, f.bob.public_info().notification_address);
        f.dht
            .put(a, key, &request.canonical_bytes().unwrap(), 100.0, 5.0)
            .unwrap();
        assert!(check_requests(&mut f.dht, b, &f.bob, &TestCrypto, 6.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn response_decisions_have_their_shapes() {
        let mut f = fixture();
        let space = f.dht.space();
        let a = f.alice.node_id(space);
        let b = f.bob.node_id(space);
        send_friend_request(&mut f.dht, a, &f.alice, &f.bob.certificate, &TestCrypto, 5.0)
            .unwrap();
        let request = check_requests(&mut f.dht, b, &f.bob, &TestCrypto, 6.0)
            .unwrap()
            .remove(0);

        for decision in [
            FriendshipDecision::UnconditionalAccept,
            FriendshipDecision::ConditionalAccept,
            FriendshipDecision::Reject,
        ] {
            let response = respond_to_request(
                &mut f.dht,
                b,
                &f.bob,
                &request,
                decision,
                &TestCrypto,
                7.0,
            )
            .unwrap();
            assert!(response.structurally_valid(), "{decision:?}");
        }
    }

    #[test]
    fn unconditional_accept_round_trip() {
        let mut f = fixture();
        let space = f.dht.space();
        let a = f.alice.node_id(space);
        let b = f.bob.node_id(space);
        send_friend_request(&mut f.dht, a, &f.alice, &f.bob.certificate, &TestCrypto, 5.0)
            .unwrap();
        let request = check_requests(&mut f.dht, b, &f.bob, &TestCrypto, 6.0)
            .unwrap()
            .remove(0);
        respond_to_request(
            &mut f.dht,
            b,
            &f.bob,
            &request,
            FriendshipDecision::UnconditionalAccept,
            &TestCrypto,
            7.0,
        )
        .unwrap();
        let responses = check_responses(&mut f.dht, a, &f.alice, &TestCrypto, 8.0).unwrap();
        assert_eq!(responses.len(), 1);
        let response = &responses[0];
        assert_eq!(response.decision, FriendshipDecision::UnconditionalAccept);
        // The friend entry is third-party verifiable.
        let entry = response.signed_friend_entry.as_ref().unwrap();
        assert_eq!(
            crate::identity::verify_friend_entry(
                entry,
                &f.alice.certificate,
                &f.bob.certificate,
                &TestCrypto,
                8,
                crate::identity::FRIEND_ENTRY_FRESHNESS_SECS
            ),
            crate::identity::FriendEntryStatus::ValidFresh
        );
        assert!(response.member_credential.is_some());
    }

    #[test]
    fn conditional_accept_defers_signing_until_confirm() {
        let mut f = fixture();
        let space = f.dht.space();
        let a = f.alice.node_id(space);
        let b = f.bob.node_id(space);
        send_friend_request(&mut f.dht, a, &f.alice, &f.bob.certificate, &TestCrypto, 5.0)
            .unwrap();
        let request = check_requests(&mut f.dht, b, &f.bob, &TestCrypto, 6.0)
            .unwrap()
            .remove(0);
        respond_to_request(
            &mut f.dht,
            b,
            &f.bob,
            &request,
            FriendshipDecision::ConditionalAccept,
            &TestCrypto,
            7.0,
        )
        .unwrap();
        let responses = check_responses(&mut f.dht, a, &f.alice, &TestCrypto, 8.0).unwrap();
        assert_eq!(responses.len(), 1);
        assert_eq!(responses[0].decision, FriendshipDecision::ConditionalAccept);
        assert!(responses[0].signed_friend_entry.is_none());

        // Bob inspects Alice's profile, is satisfied, and confirms: the
        // friend entry is issued only now.
        respond_to_request(
            &mut f.dht,
            b,
            &f.bob,
            &request,
            FriendshipDecision::UnconditionalAccept,
            &TestCrypto,
            50.0,
        )
        .unwrap();
        let responses = check_responses(&mut f.dht, a, &f.alice, &TestCrypto, 51.0).unwrap();
        let confirmed: Vec<_> = responses
            .iter()
            .filter(|r| r.decision == FriendshipDecision::UnconditionalAccept)
            .collect();
        assert_eq!(confirmed.len(), 1);
        let entry = confirmed[0].signed_friend_entry.as_ref().unwrap();
        assert_eq!(entry.timestamp, 50);
    }

    #[test]
    fn query_matching_several_certs_returns_them_all() {
        let mut f = fixture();
        let space = f.dht.space();
        let mut rng = ChaCha20Rng::seed_from_u64(4321);
        let mut published = Vec::new();
        for i in 0..4 {
            let affiliations: &[&str] = if i < 3 { &["p2p workshop"] } else { &[] };
            let identity = create_identity(
                PublicInfo::new(&format!("Member {i}"), &format!("member{i}@x.org"), affiliations),
                space,
                &TestCrypto,
                &mut rng,
                100,
            )
            .unwrap();
            let node = f.alice.node_id(space);
            publish_directory_entry(&mut f.dht, node, &identity.certificate, &TestCrypto, 0.0)
                .unwrap();
            published.push(identity.certificate.clone());
        }
        let query = DirectoryQuery {
            affiliation: Some("P2P Workshop".into()),
            ..DirectoryQuery::default()
        };
        let results =
            search_directory(&mut f.dht, f.alice.node_id(space), &query, &TestCrypto, 1.0)
                .unwrap();
        // Oracle: plain enumeration of the published set.
        let expect: std::collections::BTreeSet<Digest> = published
            .iter()
            .filter(|c| {
                c.body
                    .public_info
                    .canonicalize()
                    .affiliations
                    .contains(&"p2p workshop".to_string())
            })
            .map(|c| c.cert_hash(&TestCrypto))
            .collect();
        assert_eq!(expect.len(), 3);
        let got: std::collections::BTreeSet<Digest> =
            results.iter().map(|c| c.cert_hash(&TestCrypto)).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn reject_is_silent() {
        let mut f = fixture();
        let space = f.dht.space();
        let a = f.alice.node_id(space);
        let b = f.bob.node_id(space);
        send_friend_request(&mut f.dht, a, &f.alice, &f.bob.certificate, &TestCrypto, 5.0)
            .unwrap();
        let request = check_requests(&mut f.dht, b, &f.bob, &TestCrypto, 6.0)
            .unwrap()
            .remove(0);
        respond_to_request(
            &mut f.dht,
            b,
            &f.bob,
            &request,
            FriendshipDecision::Reject,
            &TestCrypto,
            7.0,
        )
        .unwrap();
        assert!(check_responses(&mut f.dht, a, &f.alice, &TestCrypto, 8.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn active_records_expire_and_anyone_can_publish() {
        let mut f = fixture();
        let space = f.dht.space();
        let a = f.alice.node_id(space);
        let b = f.bob.node_id(space);
        let owner_hash = f.alice.cert_hash(&TestCrypto);
        publish_active(&mut f.dht, a, &owner_hash, 0.0).unwrap();
        let (nodes, _) = lookup_active(&mut f.dht, b, &owner_hash, 10.0).unwrap();
        assert_eq!(nodes, vec![a]);
        // A malicious peer can list itself; the lookup reports it anyway.
        publish_active(&mut f.dht, b, &owner_hash, 10.0).unwrap();
        let (nodes, _) = lookup_active(&mut f.dht, b, &owner_hash, 11.0).unwrap();
        assert_eq!(nodes.len(), 2);
        // Past the TTL without republish, records disappear.
        let (nodes, _) = lookup_active(&mut f.dht, b, &owner_hash, 10.0 + 121.0).unwrap();
        assert!(nodes.is_empty());
    }
}
