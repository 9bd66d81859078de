//! Per-user private profile overlay: credential-gated admission, the signed
//! message board with a day-bucketed index, owner-only private messaging,
//! and revocation propagation (broadcast for immediacy, DHT record for
//! permanence).
//!
//! Every value stored here is signed or owner-encrypted; unsigned or
//! unverifiable values injected into the store are skipped on read, never
//! surfaced. Posts by a later-revoked member stay readable (the board is
//! history); what revocation removes is the member's access, permanently.
//!
//! Private messages follow the unidirectional mailbox layout: a fresh
//! symmetric key sealed to the owner's public key, then the message body
//! (sender, time sent, subject, body, trailing integrity hash) encrypted
//! under that key. The envelope carries no outer sender field, so the
//! mailbox leaks no metadata to other members - and, deliberately, the
//! sender named inside the plaintext is not separately signed, so an
//! admitted member could claim to be another member. That is a property of
//! the message layout itself, kept as-is rather than papered over.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::addr::{AddressSpace, NodeId};
use crate::canonical::{tags, Canonical, CanonicalError, Decoder, Encoder};
use crate::crypto::{sha256, CryptoProvider, Digest, Signature, SymKey};
use crate::dht::{Dht, DhtConfig, DhtError, DhtKey};
use crate::identity::{
    verify_chain, verify_revocation, AdmissionError, Certificate, Identity, MemberCertificate,
    RevocationRecord,
};
use crate::overlay::{Overlay, OverlayId};

pub const POST_PREFIX: &str = "post:";
pub const INDEX_PREFIX: &str = "idx:";
pub const PM_PREFIX: &str = "pm:";
pub const REVOKED_PREFIX: &str = "revoked:";

/// Posts and index entries live for 30 simulated days.
pub const POST_TTL_SECS: f64 = 30.0 * 24.0 * 3600.0;
/// Private-message mailbox TTL: 30 simulated days.
pub const PM_TTL_SECS: f64 = 30.0 * 24.0 * 3600.0;
/// Revocation records: 30 simulated days, re-published every owner session.
pub const REVOCATION_TTL_SECS: f64 = 30.0 * 24.0 * 3600.0;

pub const SECONDS_PER_DAY: u64 = 86_400;

pub fn day_bucket(seconds: u64) -> u64 {
    seconds / SECONDS_PER_DAY
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProfileError {
    #[error("no active peers are available to bootstrap into the profile overlay")]
    NoActivePeers,
    #[error("caller has no valid membership credential for this profile overlay")]
    NotAuthorized,
    #[error("membership credential has been revoked")]
    Revoked,
    #[error("operation requires the profile owner's signature")]
    NotOwner,
    #[error("profile owner is offline")]
    OwnerOffline,
    #[error(transparent)]
    Dht(#[from] DhtError),
    #[error(transparent)]
    Encoding(#[from] CanonicalError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PostKind {
    Status,
    Board,
    Media,
}

impl PostKind {
    pub const ALL: [PostKind; 3] = [PostKind::Status, PostKind::Board, PostKind::Media];

    fn discriminant(self) -> u8 {
        match self {
            PostKind::Status => 0,
            PostKind::Board => 1,
            PostKind::Media => 2,
        }
    }

    fn from_discriminant(d: u8) -> Result<PostKind, CanonicalError> {
        match d {
            0 => Ok(PostKind::Status),
            1 => Ok(PostKind::Board),
            2 => Ok(PostKind::Media),
            other => Err(CanonicalError::BadDiscriminant(other)),
        }
    }
}

/// A signed board entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProfilePost {
    pub author_cert_hash: Digest,
    pub created_at: u64,
    pub kind: PostKind,
    pub content: Vec<u8>,
    pub signature: Signature,
}

impl ProfilePost {
    pub fn signed_payload(
        author: &Digest,
        created_at: u64,
        kind: PostKind,
        content: &[u8],
    ) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.put_digest(author);
        enc.put_u64(created_at);
        enc.put_u8(kind.discriminant());
        enc.put_bytes(content).expect("content fits u32");
        enc.into_bytes()
    }

    /// The post id: hash of the full canonical record.
    pub fn post_hash(&self) -> Digest {
        sha256(&self.canonical_bytes().expect("post encoding cannot fail"))
    }

    pub fn verify(&self, author_cert: &Certificate, provider: &dyn CryptoProvider) -> bool {
        if author_cert.cert_hash(provider) != self.author_cert_hash {
            return false;
        }
        let payload =
            Self::signed_payload(&self.author_cert_hash, self.created_at, self.kind, &self.content);
        provider.verify(&author_cert.body.public_key, &payload, &self.signature)
    }
}

impl Canonical for ProfilePost {
    const TAG: u8 = tags::PROFILE_POST;

    fn encode_body(&self, enc: &mut Encoder) -> Result<(), CanonicalError> {
        enc.put_digest(&self.author_cert_hash);
        enc.put_u64(self.created_at);
        enc.put_u8(self.kind.discriminant());
        enc.put_bytes(&self.content)?;
        enc.put_bytes(&self.signature.0)
    }

    fn decode_body(dec: &mut Decoder) -> Result<Self, CanonicalError> {
        Ok(ProfilePost {
            author_cert_hash: dec.take_digest()?,
            created_at: dec.take_u64()?,
            kind: PostKind::from_discriminant(dec.take_u8()?)?,
            content: dec.take_bytes()?,
            signature: Signature(dec.take_bytes()?),
        })
    }
}

/// Decrypted private-message plaintext. The trailing `content_hash` must
/// match a recomputation over the other four fields.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrivateMessage {
    pub sender_cert_hash: Digest,
    pub sent_at: u64,
    pub subject: String,
    pub body: Vec<u8>,
    pub content_hash: Digest,
}

impl PrivateMessage {
    pub fn content_hash_for(
        sender: &Digest,
        sent_at: u64,
        subject: &str,
        body: &[u8],
    ) -> Result<Digest, CanonicalError> {
        let mut enc = Encoder::new();
        enc.put_digest(sender);
        enc.put_u64(sent_at);
        enc.put_string(subject)?;
        enc.put_bytes(body)?;
        Ok(sha256(&enc.into_bytes()))
    }

    pub fn integrity_ok(&self) -> bool {
        Self::content_hash_for(&self.sender_cert_hash, self.sent_at, &self.subject, &self.body)
            .map(|h| h == self.content_hash)
            .unwrap_or(false)
    }
}

impl Canonical for PrivateMessage {
    const TAG: u8 = tags::PRIVATE_MESSAGE;

    fn encode_body(&self, enc: &mut Encoder) -> Result<(), CanonicalError> {
        enc.put_digest(&self.sender_cert_hash);
        enc.put_u64(self.sent_at);
        enc.put_string(&self.subject)?;
        enc.put_bytes(&self.body)?;
        enc.put_digest(&self.content_hash);
        Ok(())
    }

    fn decode_body(dec: &mut Decoder) -> Result<Self, CanonicalError> {
        Ok(PrivateMessage {
            sender_cert_hash: dec.take_digest()?,
            sent_at: dec.take_u64()?,
            subject: dec.take_string()?,
            body: dec.take_bytes()?,
            content_hash: dec.take_digest()?,
        })
    }
}

/// What actually sits in the mailbox: the symmetric key sealed to the
/// owner's public key, and the message encrypted under that key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrivateMessageEnvelope {
    pub encrypted_key: Vec<u8>,
    pub ciphertext: Vec<u8>,
}

impl Canonical for PrivateMessageEnvelope {
    const TAG: u8 = tags::PRIVATE_MESSAGE_ENVELOPE;

    fn encode_body(&self, enc: &mut Encoder) -> Result<(), CanonicalError> {
        enc.put_bytes(&self.encrypted_key)?;
        enc.put_bytes(&self.ciphertext)
    }

    fn decode_body(dec: &mut Decoder) -> Result<Self, CanonicalError> {
        Ok(PrivateMessageEnvelope {
            encrypted_key: dec.take_bytes()?,
            ciphertext: dec.take_bytes()?,
        })
    }
}

/// Per-message outcome of reading the owner mailbox. Tampered envelopes are
/// reported, not silently dropped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PmReadResult {
    Message(PrivateMessage),
    Tampered(TamperReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TamperReason {
    EnvelopeUndecodable,
    KeyUnsealFailed,
    DecryptFailed,
    PlaintextUndecodable,
    HashMismatch,
}

/// Handle for one member's presence in one profile overlay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProfileMembership {
    pub member_cert_hash: Digest,
    pub node_id: NodeId,
}

struct MemberRecord {
    certificate: Certificate,
    credential: Option<MemberCertificate>, // None only for the owner
    node_id: NodeId,
    /// Revocations this member has personally witnessed (broadcasts it was
    /// online for). Survives the member's own offline periods.
    revocations_seen: BTreeMap<Digest, RevocationRecord>,
}

/// One profile overlay with its DHT, admitted-member registry, and
/// revocation state, owned by the simulation.
pub struct ProfileNet {
    pub owner_cert: Certificate,
    pub owner_cert_hash: Digest,
    pub owner_node: NodeId,
    dht: Dht,
    members: BTreeMap<Digest, MemberRecord>,
    node_index: BTreeMap<NodeId, Digest>,
    /// Every valid revocation any component has witnessed. Monotone: once a
    /// hash lands here no operation for it ever succeeds again.
    revoked: BTreeMap<Digest, RevocationRecord>,
}

impl ProfileNet {
    /// Owner brings up its own (initially single-node) profile overlay.
    pub fn start(
        owner: &Identity,
        space: AddressSpace,
        config: DhtConfig,
        provider: &dyn CryptoProvider,
    ) -> ProfileNet {
        let owner_cert_hash = owner.cert_hash(provider);
        let owner_node = owner.node_id(space);
        let overlay = Overlay::create(OverlayId::Profile(owner_cert_hash), space, owner_node);
        let mut dht = Dht::new(overlay, config);
        dht.set_pinned(Some(owner_node));
        let mut members = BTreeMap::new();
        members.insert(
            owner_cert_hash,
            MemberRecord {
                certificate: owner.certificate.clone(),
                credential: None,
                node_id: owner_node,
                revocations_seen: BTreeMap::new(),
            },
        );
        let mut node_index = BTreeMap::new();
        node_index.insert(owner_node, owner_cert_hash);
        ProfileNet {
            owner_cert: owner.certificate.clone(),
            owner_cert_hash,
            owner_node,
            dht,
            members,
            node_index,
            revoked: BTreeMap::new(),
        }
    }

    /// Bulk construction for experiments: owner plus `members` all online,
    /// credentials checked, ring built in one shot.
    pub fn build(
        owner: &Identity,
        members: &[(Identity, MemberCertificate)],
        space: AddressSpace,
        config: DhtConfig,
        provider: &dyn CryptoProvider,
    ) -> Result<ProfileNet, ProfileError> {
        let mut net = ProfileNet::start(owner, space, config, provider);
        let empty = std::collections::BTreeSet::new();
        let mut ids = vec![net.owner_node];
        for (identity, credential) in members {
            verify_chain(
                credential,
                &identity.certificate,
                &net.owner_cert,
                &empty,
                provider,
            )
            .map_err(|_| ProfileError::NotAuthorized)?;
            let hash = identity.cert_hash(provider);
            let node = identity.node_id(space);
            ids.push(node);
            net.members.insert(
                hash,
                MemberRecord {
                    certificate: identity.certificate.clone(),
                    credential: Some(credential.clone()),
                    node_id: node,
                    revocations_seen: BTreeMap::new(),
                },
            );
            net.node_index.insert(node, hash);
        }
        let overlay = Overlay::bulk_build(OverlayId::Profile(net.owner_cert_hash), space, &ids)
            .map_err(DhtError::from)?;
        let mut dht = Dht::new(overlay, config);
        dht.set_pinned(Some(net.owner_node));
        net.dht = dht;
        Ok(net)
    }

    pub fn dht(&self) -> &Dht {
        &self.dht
    }

    pub fn dht_mut(&mut self) -> &mut Dht {
        &mut self.dht
    }

    pub fn space(&self) -> AddressSpace {
        self.dht.space()
    }

    pub fn owner_membership(&self) -> ProfileMembership {
        ProfileMembership {
            member_cert_hash: self.owner_cert_hash,
            node_id: self.owner_node,
        }
    }

    pub fn membership_of(&self, identity: &Identity, provider: &dyn CryptoProvider) -> ProfileMembership {
        ProfileMembership {
            member_cert_hash: identity.cert_hash(provider),
            node_id: identity.node_id(self.space()),
        }
    }

    pub fn online_nodes(&self) -> Vec<NodeId> {
        self.dht.overlay().member_ids()
    }

    pub fn membership_for_node(&self, node: NodeId) -> Option<ProfileMembership> {
        self.node_index.get(&node).map(|hash| ProfileMembership {
            member_cert_hash: *hash,
            node_id: node,
        })
    }

    pub fn is_online(&self, node: NodeId) -> bool {
        self.dht.overlay().contains(node)
    }

    pub fn is_revoked(&self, member_cert_hash: &Digest) -> bool {
        self.revoked.contains_key(member_cert_hash)
    }

    pub fn admitted_certificate(&self, member_cert_hash: &Digest) -> Option<&Certificate> {
        self.members.get(member_cert_hash).map(|m| &m.certificate)
    }

    fn post_key(&self, post_hash: &Digest) -> DhtKey {
        let mut bytes = POST_PREFIX.as_bytes().to_vec();
        bytes.extend_from_slice(&post_hash.0);
        DhtKey::from_bytes(self.space(), &bytes)
    }

    fn index_key(&self, bucket: u64, kind: PostKind) -> DhtKey {
        let mut bytes = INDEX_PREFIX.as_bytes().to_vec();
        bytes.extend_from_slice(&self.owner_cert_hash.0);
        bytes.extend_from_slice(&bucket.to_be_bytes());
        bytes.push(kind.discriminant());
        DhtKey::from_bytes(self.space(), &bytes)
    }

    fn pm_key(&self) -> DhtKey {
        let mut bytes = PM_PREFIX.as_bytes().to_vec();
        bytes.extend_from_slice(&self.owner_cert_hash.0);
        DhtKey::from_bytes(self.space(), &bytes)
    }

    fn revoked_key(&self) -> DhtKey {
        let mut bytes = REVOKED_PREFIX.as_bytes().to_vec();
        bytes.extend_from_slice(&self.owner_cert_hash.0);
        DhtKey::from_bytes(self.space(), &bytes)
    }

    /// Revocations a particular node can see: its own witnessed set plus
    /// whatever the DHT currently returns (verified under the owner cert).
    fn revocations_visible_to(
        &mut self,
        node: NodeId,
        provider: &dyn CryptoProvider,
        now: f64,
    ) -> Result<(std::collections::BTreeSet<Digest>, usize), ProfileError> {
        let mut seen: std::collections::BTreeSet<Digest> = self
            .node_index
            .get(&node)
            .and_then(|hash| self.members.get(hash))
            .map(|m| m.revocations_seen.keys().copied().collect())
            .unwrap_or_default();
        let key = self.revoked_key();
        let result = self.dht.get(node, key, now)?;
        for value in &result.values {
            let Ok(record) = RevocationRecord::from_canonical_bytes(value) else {
                continue;
            };
            if verify_revocation(&record, &self.owner_cert, provider) {
                seen.insert(record.revoked_cert_hash);
            }
        }
        Ok((seen, result.messages))
    }

    /// Admission handshake plus ring join. `bootstrap` normally comes from
    /// the directory's active-peer lookup; the first live entry acts as the
    /// admitting neighbor. The neighbor verifies the credential chain and
    /// consults its revocation knowledge (witnessed broadcasts plus the DHT
    /// record) before letting the ring grow.
    pub fn join(
        &mut self,
        member: &Identity,
        credential: Option<&MemberCertificate>,
        bootstrap: &[NodeId],
        provider: &dyn CryptoProvider,
        now: f64,
    ) -> Result<(ProfileMembership, usize), ProfileError> {
        let member_hash = member.cert_hash(provider);
        let node = member.node_id(self.space());

        if member_hash == self.owner_cert_hash {
            return self.rejoin_owner(member, bootstrap, now);
        }

        let Some(neighbor) = bootstrap.iter().copied().find(|b| self.is_online(*b)) else {
            return Err(ProfileError::NoActivePeers);
        };
        let credential = credential.ok_or(ProfileError::NotAuthorized)?;

        // Handshake: 2 messages for the credential exchange, then the
        // neighbor's revocation lookup.
        let mut messages = 2;
        let (revoked_set, lookup_messages) =
            self.revocations_visible_to(neighbor, provider, now)?;
        messages += lookup_messages;
        match verify_chain(
            credential,
            &member.certificate,
            &self.owner_cert,
            &revoked_set,
            provider,
        ) {
            Ok(()) => {}
            Err(AdmissionError::Revoked) => return Err(ProfileError::Revoked),
            Err(AdmissionError::BadCredential) => return Err(ProfileError::NotAuthorized),
        }
        // The global set also bars members whose revocation this neighbor
        // missed; permanence must not depend on who answers the handshake.
        if self.revoked.contains_key(&member_hash) {
            return Err(ProfileError::Revoked);
        }

        let stats = self.dht.join(node, neighbor)?;
        messages += stats.messages;
        self.members
            .entry(member_hash)
            .or_insert_with(|| MemberRecord {
                certificate: member.certificate.clone(),
                credential: Some(credential.clone()),
                node_id: node,
                revocations_seen: BTreeMap::new(),
            })
            .credential = Some(credential.clone());
        self.node_index.insert(node, member_hash);
        Ok((
            ProfileMembership {
                member_cert_hash: member_hash,
                node_id: node,
            },
            messages,
        ))
    }

    fn rejoin_owner(
        &mut self,
        owner: &Identity,
        bootstrap: &[NodeId],
        now: f64,
    ) -> Result<(ProfileMembership, usize), ProfileError> {
        let node = owner.node_id(self.space());
        let mut messages = 0;
        if self.dht.overlay().is_empty() {
            self.dht.create_genesis(node)?;
        } else {
            let Some(neighbor) = bootstrap.iter().copied().find(|b| self.is_online(*b)) else {
                return Err(ProfileError::NoActivePeers);
            };
            messages += self.dht.join(node, neighbor)?.messages;
        }
        self.node_index.insert(node, self.owner_cert_hash);
        self.dht.set_pinned(Some(node));
        // Each owner session re-publishes every revocation it has issued.
        let records: Vec<RevocationRecord> = self.revoked.values().cloned().collect();
        let key = self.revoked_key();
        for record in records {
            let receipt = self
                .dht
                .put(node, key, &record.canonical_bytes()?, REVOCATION_TTL_SECS, now)?;
            messages += receipt.messages;
        }
        Ok((self.owner_membership(), messages))
    }

    /// Graceful sign-off.
    pub fn leave(&mut self, membership: ProfileMembership) -> Result<(), ProfileError> {
        self.dht.leave(membership.node_id)?;
        self.node_index.remove(&membership.node_id);
        if membership.node_id == self.owner_node {
            self.dht.set_pinned(None);
        }
        Ok(())
    }

    /// Crash: no handoff; ring and replicas heal on later maintenance.
    pub fn fail_node(&mut self, node: NodeId) -> Result<(), ProfileError> {
        self.dht.fail(node)?;
        self.node_index.remove(&node);
        if node == self.owner_node {
            self.dht.set_pinned(None);
        }
        Ok(())
    }

    pub fn stabilize_round(&mut self) -> usize {
        self.dht.stabilize_round()
    }

    pub fn replica_repair(&mut self, now: f64) -> usize {
        self.dht.replica_repair(now)
    }

    fn ensure_active(&self, membership: &ProfileMembership) -> Result<(), ProfileError> {
        if self.revoked.contains_key(&membership.member_cert_hash) {
            return Err(ProfileError::Revoked);
        }
        let record = self
            .members
            .get(&membership.member_cert_hash)
            .ok_or(ProfileError::NotAuthorized)?;
        if record.node_id != membership.node_id || !self.is_online(membership.node_id) {
            return Err(ProfileError::NotAuthorized);
        }
        Ok(())
    }

    /// Sign and store a post, and index it under its (day, kind) bucket.
    pub fn publish_post(
        &mut self,
        membership: &ProfileMembership,
        author: &Identity,
        kind: PostKind,
        content: &[u8],
        provider: &dyn CryptoProvider,
        now: f64,
    ) -> Result<(Digest, usize), ProfileError> {
        self.ensure_active(membership)?;
        if author.cert_hash(provider) != membership.member_cert_hash {
            return Err(ProfileError::NotAuthorized);
        }
        let created_at = now as u64;
        let payload =
            ProfilePost::signed_payload(&membership.member_cert_hash, created_at, kind, content);
        let post = ProfilePost {
            author_cert_hash: membership.member_cert_hash,
            created_at,
            kind,
            content: content.to_vec(),
            signature: provider.sign(&author.private_key, &payload),
        };
        let post_hash = post.post_hash();
        let post_key = self.post_key(&post_hash);
        let index_key = self.index_key(day_bucket(created_at), kind);
        let mut messages = self
            .dht
            .put(
                membership.node_id,
                post_key,
                &post.canonical_bytes()?,
                POST_TTL_SECS,
                now,
            )?
            .messages;
        messages += self
            .dht
            .put(membership.node_id, index_key, &post_hash.0, POST_TTL_SECS, now)?
            .messages;
        Ok((post_hash, messages))
    }

    /// Resolve the index buckets covering `[from_secs, to_secs]`, fetch and
    /// verify each referenced post, filter, and return them ordered by
    /// (created_at, post hash).
    #[allow(clippy::too_many_arguments)]
    pub fn fetch_posts(
        &mut self,
        membership: &ProfileMembership,
        from_secs: u64,
        to_secs: u64,
        kind_filter: Option<PostKind>,
        author_filter: Option<Digest>,
        provider: &dyn CryptoProvider,
        now: f64,
    ) -> Result<(Vec<ProfilePost>, usize), ProfileError> {
        self.ensure_active(membership)?;
        let mut messages = 0;
        let mut found: BTreeMap<(u64, Digest), ProfilePost> = BTreeMap::new();
        if from_secs > to_secs {
            return Ok((Vec::new(), 0));
        }
        let kinds: Vec<PostKind> = match kind_filter {
            Some(k) => vec![k],
            None => PostKind::ALL.to_vec(),
        };
        for bucket in day_bucket(from_secs)..=day_bucket(to_secs) {
            for kind in &kinds {
                let index_key = self.index_key(bucket, *kind);
                let index = self.dht.get(membership.node_id, index_key, now)?;
                messages += index.messages;
                for value in index.values {
                    let Ok(bytes): Result<[u8; 32], _> = value.as_slice().try_into() else {
                        continue; // junk injected at the index key
                    };
                    let post_hash = Digest(bytes);
                    let post_key = self.post_key(&post_hash);
                    let fetched = self.dht.get(membership.node_id, post_key, now)?;
                    messages += fetched.messages;
                    for post_bytes in fetched.values {
                        let Ok(post) = ProfilePost::from_canonical_bytes(&post_bytes) else {
                            continue;
                        };
                        // The key commits to the record it serves.
                        if post.post_hash() != post_hash {
                            continue;
                        }
                        if post.kind != *kind
                            || post.created_at < from_secs
                            || post.created_at > to_secs
                        {
                            continue;
                        }
                        if let Some(author) = &author_filter {
                            if post.author_cert_hash != *author {
                                continue;
                            }
                        }
                        let Some(author_cert) = self
                            .members
                            .get(&post.author_cert_hash)
                            .map(|m| &m.certificate)
                        else {
                            continue; // never admitted here
                        };
                        if !post.verify(author_cert, provider) {
                            continue;
                        }
                        found.insert((post.created_at, post_hash), post);
                    }
                }
            }
        }
        Ok((found.into_values().collect(), messages))
    }

    /// Encrypt a message to the owner and drop it in the mailbox.
    #[allow(clippy::too_many_arguments)]
    pub fn send_private_message(
        &mut self,
        membership: &ProfileMembership,
        sender: &Identity,
        subject: &str,
        body: &[u8],
        provider: &dyn CryptoProvider,
        rng: &mut dyn rand::RngCore,
        now: f64,
    ) -> Result<usize, ProfileError> {
        self.ensure_active(membership)?;
        if sender.cert_hash(provider) != membership.member_cert_hash {
            return Err(ProfileError::NotAuthorized);
        }
        let sent_at = now as u64;
        let sender_hash = membership.member_cert_hash;
        let message = PrivateMessage {
            sender_cert_hash: sender_hash,
            sent_at,
            subject: subject.to_string(),
            body: body.to_vec(),
            content_hash: PrivateMessage::content_hash_for(&sender_hash, sent_at, subject, body)?,
        };
        // Fresh symmetric key per message.
        let sym_key = provider.generate_sym_key(rng);
        let envelope = PrivateMessageEnvelope {
            encrypted_key: provider.seal(&self.owner_cert.body.public_key, &sym_key.0, rng),
            ciphertext: provider.sym_encrypt(&sym_key, &message.canonical_bytes()?, rng),
        };
        let key = self.pm_key();
        let receipt = self.dht.put(
            membership.node_id,
            key,
            &envelope.canonical_bytes()?,
            PM_TTL_SECS,
            now,
        )?;
        Ok(receipt.messages)
    }

    /// Poll the mailbox and decrypt with the owner key. Envelopes that fail
    /// to unseal, decrypt, decode, or match their trailing hash come back as
    /// tamper reports.
    pub fn read_private_messages(
        &mut self,
        owner: &Identity,
        provider: &dyn CryptoProvider,
        now: f64,
    ) -> Result<Vec<PmReadResult>, ProfileError> {
        if owner.cert_hash(provider) != self.owner_cert_hash {
            return Err(ProfileError::NotOwner);
        }
        if !self.is_online(self.owner_node) {
            return Err(ProfileError::OwnerOffline);
        }
        let key = self.pm_key();
        let values = self.dht.get(self.owner_node, key, now)?.values;
        let mut out = Vec::with_capacity(values.len());
        for value in values {
            out.push(Self::open_envelope(&value, owner, provider));
        }
        Ok(out)
    }

    fn open_envelope(
        value: &[u8],
        owner: &Identity,
        provider: &dyn CryptoProvider,
    ) -> PmReadResult {
        let Ok(envelope) = PrivateMessageEnvelope::from_canonical_bytes(value) else {
            return PmReadResult::Tampered(TamperReason::EnvelopeUndecodable);
        };
        let Some(key_bytes) = provider.open(&owner.private_key, &envelope.encrypted_key) else {
            return PmReadResult::Tampered(TamperReason::KeyUnsealFailed);
        };
        let Some(plaintext) = provider.sym_decrypt(&SymKey(key_bytes), &envelope.ciphertext)
        else {
            return PmReadResult::Tampered(TamperReason::DecryptFailed);
        };
        let Ok(message) = PrivateMessage::from_canonical_bytes(&plaintext) else {
            return PmReadResult::Tampered(TamperReason::PlaintextUndecodable);
        };
        if !message.integrity_ok() {
            return PmReadResult::Tampered(TamperReason::HashMismatch);
        }
        PmReadResult::Message(message)
    }

    /// Broadcast a revocation to every online member and store it in the
    /// DHT so offline members hit it later. The revoked node, if online, is
    /// expelled and the ring stabilized around it.
    pub fn propagate_revocation(
        &mut self,
        owner: &Identity,
        record: RevocationRecord,
        provider: &dyn CryptoProvider,
        now: f64,
    ) -> Result<(Vec<NodeId>, usize), ProfileError> {
        if owner.cert_hash(provider) != self.owner_cert_hash
            || !verify_revocation(&record, &self.owner_cert, provider)
        {
            return Err(ProfileError::NotOwner);
        }
        if !self.is_online(self.owner_node) {
            return Err(ProfileError::OwnerOffline);
        }

        // Permanent record first, while the ring is intact.
        let key = self.revoked_key();
        let receipt =
            self.dht
                .put(self.owner_node, key, &record.canonical_bytes()?, REVOCATION_TTL_SECS, now)?;
        let mut messages = receipt.messages;

        let outcome = self
            .dht
            .overlay_mut()
            .broadcast(self.owner_node)
            .map_err(DhtError::from)?;
        self.dht.count_chain(outcome.messages.len());
        messages += outcome.messages.len();
        for node in &outcome.delivered {
            if let Some(hash) = self.node_index.get(node) {
                if let Some(member) = self.members.get_mut(hash) {
                    member
                        .revocations_seen
                        .insert(record.revoked_cert_hash, record.clone());
                }
            }
        }
        self.revoked
            .insert(record.revoked_cert_hash, record.clone());

        // Online members drop their links to the revoked node.
        let revoked_node = self
            .members
            .get(&record.revoked_cert_hash)
            .map(|m| m.node_id)
            .filter(|n| self.is_online(*n));
        if let Some(node) = revoked_node {
            self.dht.fail(node)?;
            self.node_index.remove(&node);
            self.dht.stabilize_round();
        }
        Ok((outcome.delivered, messages))
    }
}
