//! Multi-value DHT with TTL and replication, layered on [`Overlay`].
//!
//! Values live at the `r` live nodes clockwise from their key. Distinct
//! values coexist at one key (a multi-value set keyed by value hash);
//! re-publishing an identical value refreshes its timestamp instead of
//! duplicating it. Reads consult the replica set in clockwise order and
//! return the first non-empty holder's unexpired set, so a holder that
//! joined after the last repair does not shadow the surviving copies.
//!
//! Crashed nodes lose their stored entries; periodic
//! [`replica_repair`](Dht::replica_repair) re-homes every surviving entry
//! onto its current replica set. If all holders of an entry crash between
//! repairs the entry is lost - that is the documented loss mode.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::addr::{AddressSpace, NodeId};
use crate::crypto::{sha256, Digest};
use crate::overlay::{JoinStats, Overlay, OverlayError};

/// Default replication factor.
pub const DEFAULT_REPLICATION: usize = 3;

/// Default cap on a single stored value.
pub const DEFAULT_MAX_VALUE_BYTES: usize = 64 * 1024;

/// A DHT key: a position in the overlay address space, usually derived by
/// hashing canonical bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct DhtKey(NodeId);

impl DhtKey {
    /// Hash arbitrary bytes into the address space.
    pub fn from_bytes(space: AddressSpace, bytes: &[u8]) -> DhtKey {
        DhtKey(space.derive_id(bytes))
    }

    /// Use an existing overlay address (e.g. a notification address) as a
    /// key. Out-of-space addresses from untrusted records are reduced.
    pub fn from_address(space: AddressSpace, id: NodeId) -> DhtKey {
        DhtKey(space.clamp(id))
    }

    pub fn node_id(self) -> NodeId {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
struct StoredValue {
    value: Vec<u8>,
    inserted_at: f64,
    ttl: f64,
}

impl StoredValue {
    fn expired(&self, now: f64) -> bool {
        now > self.inserted_at + self.ttl
    }
}

/// One stored entry, as seen by diagnostics and tests.
#[derive(Clone, Debug)]
pub struct DhtEntry {
    pub key: DhtKey,
    pub value: Vec<u8>,
    pub inserted_at: f64,
    pub ttl: f64,
    pub value_hash: Digest,
}

type NodeStore = BTreeMap<DhtKey, BTreeMap<Digest, StoredValue>>;
type Placement = BTreeMap<NodeId, Vec<(DhtKey, Digest, StoredValue)>>;

#[derive(Clone, Copy, Debug)]
pub struct DhtConfig {
    pub replication: usize,
    pub max_value_bytes: usize,
}

impl Default for DhtConfig {
    fn default() -> Self {
        DhtConfig {
            replication: DEFAULT_REPLICATION,
            max_value_bytes: DEFAULT_MAX_VALUE_BYTES,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DhtError {
    #[error("overlay has no live members")]
    EmptyOverlay,
    #[error("node {0} is not a member of this overlay")]
    NotMember(NodeId),
    #[error("value of {size} bytes exceeds the cap of {max} bytes")]
    ValueTooLarge { size: usize, max: usize },
    #[error("empty values cannot be stored")]
    EmptyValue,
    #[error("ttl must be positive")]
    InvalidTtl,
    #[error(transparent)]
    Routing(#[from] OverlayError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PutReceipt {
    pub holders: Vec<NodeId>,
    pub messages: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GetResult {
    /// Unexpired values, sorted by value hash.
    pub values: Vec<Vec<u8>>,
    pub messages: usize,
}

pub struct Dht {
    overlay: Overlay,
    config: DhtConfig,
    stores: BTreeMap<NodeId, NodeStore>,
    /// When set and live, this node keeps a full copy of every entry (the
    /// profile owner pins its own profile data while online).
    pinned: Option<NodeId>,
    metrics: crate::sim::TrafficMetrics,
}

impl Dht {
    pub fn new(overlay: Overlay, config: DhtConfig) -> Dht {
        let stores = overlay
            .member_ids()
            .into_iter()
            .map(|id| (id, NodeStore::new()))
            .collect();
        Dht {
            overlay,
            config,
            stores,
            pinned: None,
            metrics: crate::sim::TrafficMetrics::default(),
        }
    }

    /// Message conservation counters accumulated across every operation.
    pub fn metrics(&self) -> crate::sim::TrafficMetrics {
        self.metrics
    }

    /// Count an externally simulated message chain (e.g. broadcasts run by
    /// a layer above) against this overlay's totals.
    pub fn count_chain(&mut self, n: usize) {
        self.metrics.delivered_chain(n);
    }

    fn count_route_failure(&mut self, err: &OverlayError) {
        if let OverlayError::DeadLink { delivered_hops, .. } = err {
            self.metrics.sent += *delivered_hops as u64 + 1;
            self.metrics.delivered += *delivered_hops as u64;
            self.metrics.dropped_dead += 1;
        }
    }

    pub fn overlay(&self) -> &Overlay {
        &self.overlay
    }

    pub fn overlay_mut(&mut self) -> &mut Overlay {
        &mut self.overlay
    }

    pub fn config(&self) -> DhtConfig {
        self.config
    }

    pub fn space(&self) -> AddressSpace {
        self.overlay.space()
    }

    pub fn set_pinned(&mut self, node: Option<NodeId>) {
        self.pinned = node;
    }

    pub fn join(&mut self, new_node: NodeId, bootstrap: NodeId) -> Result<JoinStats, DhtError> {
        let stats = self.overlay.join(new_node, bootstrap).inspect_err(|e| {
            self.count_route_failure(e);
        })?;
        self.metrics.delivered_chain(stats.messages);
        self.stores.insert(new_node, NodeStore::new());
        Ok(stats)
    }

    pub fn create_genesis(&mut self, node: NodeId) -> Result<(), DhtError> {
        if !self.overlay.is_empty() {
            return Err(DhtError::Routing(OverlayError::IdCollision(node)));
        }
        let id = self.overlay.id();
        let space = self.overlay.space();
        self.overlay = Overlay::create(id, space, node);
        self.stores.insert(node, NodeStore::new());
        Ok(())
    }

    /// Graceful departure with data handoff: the leaving node's entries move
    /// to their new replica sets before it disappears.
    pub fn leave(&mut self, node: NodeId) -> Result<(), DhtError> {
        let store = self
            .stores
            .remove(&node)
            .ok_or(DhtError::NotMember(node))?;
        self.overlay.leave(node)?;
        let mut transfers = 0;
        for (key, values) in store {
            for (hash, sv) in values {
                for holder in self.holders_for(key) {
                    self.copy_into(holder, key, hash, &sv);
                    transfers += 1;
                }
            }
        }
        self.metrics.delivered_chain(transfers);
        Ok(())
    }

    /// Crash: stored entries are lost with the node.
    pub fn fail(&mut self, node: NodeId) -> Result<(), DhtError> {
        self.stores.remove(&node).ok_or(DhtError::NotMember(node))?;
        self.overlay.fail(node)?;
        Ok(())
    }

    pub fn stabilize_round(&mut self) -> usize {
        self.overlay.stabilize_round()
    }

    /// The current replica set for `key`: the `r` live nodes clockwise from
    /// it.
    pub fn replica_set(&self, key: DhtKey) -> Vec<NodeId> {
        self.overlay
            .successors_of_key(key.node_id(), self.config.replication)
    }

    fn holders_for(&self, key: DhtKey) -> Vec<NodeId> {
        self.replica_set(key)
    }

    fn copy_into(&mut self, node: NodeId, key: DhtKey, hash: Digest, sv: &StoredValue) {
        if let Some(store) = self.stores.get_mut(&node) {
            store
                .entry(key)
                .or_default()
                .entry(hash)
                .and_modify(|existing| {
                    if sv.inserted_at > existing.inserted_at {
                        *existing = sv.clone();
                    }
                })
                .or_insert_with(|| sv.clone());
        }
    }

    fn ensure_member(&self, from: NodeId) -> Result<(), DhtError> {
        if self.overlay.is_empty() {
            return Err(DhtError::EmptyOverlay);
        }
        if !self.overlay.contains(from) {
            return Err(DhtError::NotMember(from));
        }
        Ok(())
    }

    /// Store `value` at `key` from node `from`. The value lands on the whole
    /// replica set (plus the pinned owner, when online) and is visible to
    /// `get` immediately afterwards.
    pub fn put(
        &mut self,
        from: NodeId,
        key: DhtKey,
        value: &[u8],
        ttl: f64,
        now: f64,
    ) -> Result<PutReceipt, DhtError> {
        self.ensure_member(from)?;
        if value.is_empty() {
            return Err(DhtError::EmptyValue);
        }
        // NaN-rejecting guard: ttl must be a positive number.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(ttl > 0.0) {
            return Err(DhtError::InvalidTtl);
        }
        if value.len() > self.config.max_value_bytes {
            return Err(DhtError::ValueTooLarge {
                size: value.len(),
                max: self.config.max_value_bytes,
            });
        }
        let path = self.overlay.route(from, key.node_id()).inspect_err(|e| {
            self.count_route_failure(e);
        })?;
        let holders = self.holders_for(key);
        let hash = sha256(value);
        let sv = StoredValue {
            value: value.to_vec(),
            inserted_at: now,
            ttl,
        };
        // Re-publication refreshes the timestamp.
        for holder in &holders {
            if let Some(store) = self.stores.get_mut(holder) {
                store.entry(key).or_default().insert(hash, sv.clone());
            }
        }
        let mut messages = path.len() + 1 + holders.len().saturating_sub(1);
        if let Some(owner) = self.pinned {
            if self.overlay.contains(owner) && !holders.contains(&owner) {
                if let Some(store) = self.stores.get_mut(&owner) {
                    store.entry(key).or_default().insert(hash, sv.clone());
                }
                messages += 1;
            }
        }
        self.metrics.delivered_chain(messages);
        Ok(PutReceipt { holders, messages })
    }

    /// Fetch the value set at `key` as seen from `from`: the first replica
    /// holder (clockwise) with a non-empty unexpired set answers; the pinned
    /// owner is consulted last as a fallback provider.
    pub fn get(&mut self, from: NodeId, key: DhtKey, now: f64) -> Result<GetResult, DhtError> {
        self.ensure_member(from)?;
        let path = self.overlay.route(from, key.node_id()).inspect_err(|e| {
            self.count_route_failure(e);
        })?;
        let mut consult = self.holders_for(key);
        if let Some(owner) = self.pinned {
            if self.overlay.contains(owner) && !consult.contains(&owner) {
                consult.push(owner);
            }
        }
        let mut messages = path.len() + 1;
        for (i, holder) in consult.iter().enumerate() {
            if i > 0 {
                messages += 1;
            }
            let Some(store) = self.stores.get(holder) else {
                continue;
            };
            let Some(values) = store.get(&key) else {
                continue;
            };
            let mut live: Vec<(&Digest, &StoredValue)> =
                values.iter().filter(|(_, sv)| !sv.expired(now)).collect();
            if live.is_empty() {
                continue;
            }
            live.sort_by_key(|(hash, _)| **hash);
            self.metrics.delivered_chain(messages);
            return Ok(GetResult {
                values: live.into_iter().map(|(_, sv)| sv.value.clone()).collect(),
                messages,
            });
        }
        self.metrics.delivered_chain(messages);
        Ok(GetResult {
            values: Vec::new(),
            messages,
        })
    }

    /// Re-home every unexpired entry onto its current replica set: copy to
    /// holders that miss it, drop it from nodes that are no longer holders
    /// (the pinned owner keeps everything), and purge expired values.
    /// Returns the number of entry transfers.
    pub fn replica_repair(&mut self, now: f64) -> usize {
        // Union of every live copy, freshest timestamp wins.
        let mut union: BTreeMap<(DhtKey, Digest), StoredValue> = BTreeMap::new();
        for store in self.stores.values() {
            for (key, values) in store {
                for (hash, sv) in values {
                    if sv.expired(now) {
                        continue;
                    }
                    union
                        .entry((*key, *hash))
                        .and_modify(|existing| {
                            if sv.inserted_at > existing.inserted_at {
                                *existing = sv.clone();
                            }
                        })
                        .or_insert_with(|| sv.clone());
                }
            }
        }

        let pinned = self
            .pinned
            .filter(|owner| self.overlay.contains(*owner));
        let mut moved = 0;
        let mut placement: Placement = BTreeMap::new();
        for ((key, hash), sv) in &union {
            let mut targets = self.holders_for(*key);
            if let Some(owner) = pinned {
                if !targets.contains(&owner) {
                    targets.push(owner);
                }
            }
            for t in targets {
                placement.entry(t).or_default().push((*key, *hash, sv.clone()));
            }
        }

        for (node, store) in self.stores.iter_mut() {
            let desired = placement.remove(node).unwrap_or_default();
            let mut fresh: NodeStore = NodeStore::new();
            for (key, hash, sv) in desired {
                let had = store
                    .get(&key)
                    .and_then(|values| values.get(&hash))
                    .is_some();
                if !had {
                    moved += 1;
                }
                fresh.entry(key).or_default().insert(hash, sv);
            }
            *store = fresh;
        }
        self.metrics.delivered_chain(moved);
        moved
    }

    /// Every unexpired entry currently held anywhere, for tests and metrics.
    pub fn all_entries(&self, now: f64) -> Vec<DhtEntry> {
        let mut seen: BTreeMap<(DhtKey, Digest), DhtEntry> = BTreeMap::new();
        for store in self.stores.values() {
            for (key, values) in store {
                for (hash, sv) in values {
                    if sv.expired(now) {
                        continue;
                    }
                    seen.entry((*key, *hash)).or_insert_with(|| DhtEntry {
                        key: *key,
                        value: sv.value.clone(),
                        inserted_at: sv.inserted_at,
                        ttl: sv.ttl,
                        value_hash: *hash,
                    });
                }
            }
        }
        seen.into_values().collect()
    }

    /// Which live nodes hold an unexpired copy of `key` (diagnostics).
    pub fn holders_with_key(&self, key: DhtKey, now: f64) -> Vec<NodeId> {
        self.stores
            .iter()
            .filter(|(_, store)| {
                store
                    .get(&key)
                    .map(|values| values.values().any(|sv| !sv.expired(now)))
                    .unwrap_or(false)
            })
            .map(|(id, _)| *id)
            .collect()
    }
}
