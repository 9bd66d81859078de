//! Ring-structured overlay: successor/predecessor maintenance, power-of-two
//! shortcut (finger) tables, greedy clockwise routing, join/leave/fail with
//! round-based stabilization, and address-range-partitioned broadcast.
//!
//! One [`Overlay`] value is one overlay instance (the public directory or a
//! single profile overlay) as seen by the simulation that owns it. All state
//! is owned by the caller; nothing here is shared or locked.
//!
//! Maintenance model: `join` and `leave` update the two affected neighbors
//! eagerly; `fail` leaves neighbor pointers stale until the next
//! [`stabilize_round`](Overlay::stabilize_round). Finger tables are refreshed
//! lazily against the current membership version the next time a node routes
//! or relays, which yields exactly the tables an eager recompute would.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::addr::{Addr, AddressSpace, NodeId};
use crate::crypto::Digest;

/// Which overlay a value belongs to: the single public directory overlay or
/// one per-user profile overlay keyed by the owner's certificate hash.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum OverlayId {
    Directory,
    Profile(Digest),
}

/// A shortcut link: the live node responsible for `self + 2^exponent`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shortcut {
    pub exponent: u16,
    pub link: NodeId,
}

/// Per-node view of the ring. Shortcut entries whose responsible node is the
/// node itself are omitted.
#[derive(Clone, Debug)]
pub struct RoutingTable {
    pub node: NodeId,
    pub successor: NodeId,
    pub predecessor: NodeId,
    pub shortcuts: Vec<Shortcut>,
    fingers_version: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OverlayError {
    #[error("overlay has no live members")]
    EmptyOverlay,
    #[error("node {0} is already a member")]
    IdCollision(NodeId),
    #[error("bootstrap node {0} is not a live member")]
    BootstrapUnreachable(NodeId),
    #[error("node {0} is not a member")]
    UnknownNode(NodeId),
    #[error("node id {0} does not fit the configured address space")]
    OutOfSpace(NodeId),
    #[error("routing stuck at {at} for key {key}: no neighbor reduces distance")]
    RoutingStuck { at: NodeId, key: NodeId },
    #[error("next hop {to} from {at} is dead")]
    DeadLink {
        at: NodeId,
        to: NodeId,
        delivered_hops: usize,
    },
}

/// Message cost of a protocol-path join, for latency accounting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct JoinStats {
    /// Hops taken by the successor lookup from the bootstrap node.
    pub lookup_hops: usize,
    /// Number of finger targets that needed their own routed lookup.
    pub finger_lookups: usize,
    /// Total hops across those finger lookups.
    pub finger_hops: usize,
    /// Total messages: lookup hops + reply, two neighbor notifications, and
    /// per finger lookup its hops + reply.
    pub messages: usize,
}

#[derive(Clone, Debug)]
pub struct BroadcastMessage {
    pub from: NodeId,
    pub to: NodeId,
    /// Exclusive end of the address range delegated to `to`.
    pub limit: NodeId,
}

#[derive(Clone, Debug)]
pub struct BroadcastOutcome {
    /// Every member that received the payload, in delivery order.
    pub delivered: Vec<NodeId>,
    pub messages: Vec<BroadcastMessage>,
}

pub struct Overlay {
    id: OverlayId,
    space: AddressSpace,
    nodes: BTreeMap<NodeId, RoutingTable>,
    /// Bumped on every membership change; stale finger tables are rebuilt
    /// against it on demand.
    version: u64,
}

impl Overlay {
    /// Genesis: a single-node overlay.
    pub fn create(id: OverlayId, space: AddressSpace, first: NodeId) -> Overlay {
        assert!(
            space.contains(first.addr()),
            "genesis node id must fit the address space"
        );
        let mut nodes = BTreeMap::new();
        nodes.insert(
            first,
            RoutingTable {
                node: first,
                successor: first,
                predecessor: first,
                shortcuts: Vec::new(),
                fingers_version: 1,
            },
        );
        Overlay {
            id,
            space,
            nodes,
            version: 1,
        }
    }

    pub fn empty(id: OverlayId, space: AddressSpace) -> Overlay {
        Overlay {
            id,
            space,
            nodes: BTreeMap::new(),
            version: 0,
        }
    }

    /// Build a full overlay in one shot. End state is identical to joining
    /// the same ids sequentially (finger tables are filled lazily either
    /// way); used to set up large experiment topologies.
    pub fn bulk_build(
        id: OverlayId,
        space: AddressSpace,
        ids: &[NodeId],
    ) -> Result<Overlay, OverlayError> {
        let mut overlay = Overlay::empty(id, space);
        let mut sorted = ids.to_vec();
        sorted.sort();
        for id in &sorted {
            if !space.contains(id.addr()) {
                return Err(OverlayError::OutOfSpace(*id));
            }
        }
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(OverlayError::IdCollision(w[0]));
            }
        }
        let n = sorted.len();
        for (i, node) in sorted.iter().enumerate() {
            overlay.nodes.insert(
                *node,
                RoutingTable {
                    node: *node,
                    successor: sorted[(i + 1) % n],
                    predecessor: sorted[(i + n - 1) % n],
                    shortcuts: Vec::new(),
                    fingers_version: 0,
                },
            );
        }
        overlay.version = 1;
        Ok(overlay)
    }

    pub fn id(&self) -> OverlayId {
        self.id
    }

    pub fn space(&self) -> AddressSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains_key(&node)
    }

    /// Live member ids in ring (sorted) order.
    pub fn member_ids(&self) -> Vec<NodeId> {
        self.nodes.keys().copied().collect()
    }

    pub fn table(&self, node: NodeId) -> Option<&RoutingTable> {
        self.nodes.get(&node)
    }

    /// Membership version; bumped on join/leave/fail.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// The live node responsible for `key`: the one minimizing clockwise
    /// distance from the key (the key's successor; a node owns its own id).
    pub fn responsible_node(&self, key: NodeId) -> Result<NodeId, OverlayError> {
        if self.nodes.is_empty() {
            return Err(OverlayError::EmptyOverlay);
        }
        let key = self.space.clamp(key);
        match self.nodes.range(key..).next() {
            Some((id, _)) => Ok(*id),
            None => Ok(*self.nodes.keys().next().expect("non-empty")),
        }
    }

    /// The `count` live nodes clockwise from `key` (the replica set rooted
    /// at the key's responsible node).
    pub fn successors_of_key(&self, key: NodeId, count: usize) -> Vec<NodeId> {
        let key = self.space.clamp(key);
        let take = count.min(self.nodes.len());
        self.nodes
            .range(key..)
            .chain(self.nodes.range(..key))
            .take(take)
            .map(|(id, _)| *id)
            .collect()
    }

    fn compute_fingers(&self, node: NodeId) -> Vec<Shortcut> {
        let mut shortcuts = Vec::new();
        let mut last_link: Option<NodeId> = None;
        for exponent in 0..self.space.bits() {
            let target = self.space.offset(node, Addr::pow2(exponent));
            // Monotone targets: if the previous link already covers this
            // target there is no new responsible node to find.
            let link = match last_link {
                Some(link) if self.space.in_interval_oc(node, link, target) => link,
                _ => self.responsible_node(target).expect("non-empty overlay"),
            };
            last_link = Some(link);
            if link != node {
                shortcuts.push(Shortcut { exponent, link });
            }
        }
        shortcuts
    }

    fn refresh_fingers(&mut self, node: NodeId) {
        let stale = match self.nodes.get(&node) {
            Some(t) => t.fingers_version != self.version,
            None => return,
        };
        if stale {
            let shortcuts = self.compute_fingers(node);
            let version = self.version;
            let t = self.nodes.get_mut(&node).expect("checked above");
            t.shortcuts = shortcuts;
            t.fingers_version = version;
        }
    }

    /// Force-refresh every finger table (tests and invariant checks).
    pub fn refresh_all_fingers(&mut self) {
        for node in self.member_ids() {
            self.refresh_fingers(node);
        }
    }

    fn next_hop(&self, table: &RoutingTable, key: NodeId) -> Option<NodeId> {
        let space = self.space;
        // Final-hop rule: the key lives between us and our successor.
        if space.in_interval_oc(table.node, table.successor, key) {
            return Some(table.successor);
        }
        let dist_key = space.ring_distance(table.node, key);
        let mut best: Option<(Addr, NodeId)> = None;
        let mut consider = |candidate: NodeId| {
            let d = space.ring_distance(table.node, candidate);
            if d.is_zero() || d > dist_key {
                return; // self or overshoot
            }
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, candidate));
            }
        };
        consider(table.successor);
        for s in &table.shortcuts {
            consider(s.link);
        }
        best.map(|(_, n)| n)
    }

    /// Greedy clockwise routing from `from` towards `key`. The returned path
    /// excludes `from` and ends at the terminal (responsible) node; routing
    /// from the responsible node itself yields an empty path.
    pub fn route(&mut self, from: NodeId, key: NodeId) -> Result<Vec<NodeId>, OverlayError> {
        self.route_inner(from, key, None)
    }

    /// Like [`route`](Overlay::route) but the first hop is chosen from the
    /// caller-provided table instead of the stored one. Used while a joining
    /// node still has a partially built finger table.
    fn route_inner(
        &mut self,
        from: NodeId,
        key: NodeId,
        start_table: Option<&RoutingTable>,
    ) -> Result<Vec<NodeId>, OverlayError> {
        if self.nodes.is_empty() {
            return Err(OverlayError::EmptyOverlay);
        }
        if start_table.is_none() && !self.nodes.contains_key(&from) {
            return Err(OverlayError::UnknownNode(from));
        }
        let key = self.space.clamp(key);
        let max_hops = self.nodes.len() + self.space.bits() as usize + 4;
        let mut path: Vec<NodeId> = Vec::new();
        let mut cur = from;
        loop {
            let next = {
                let table: &RoutingTable = if cur == from {
                    match start_table {
                        Some(t) => t,
                        None => {
                            self.refresh_fingers(cur);
                            &self.nodes[&cur]
                        }
                    }
                } else {
                    self.refresh_fingers(cur);
                    &self.nodes[&cur]
                };
                if self.space.in_interval_oc(table.predecessor, table.node, key) {
                    return Ok(path);
                }
                self.next_hop(table, key)
                    .ok_or(OverlayError::RoutingStuck { at: cur, key })?
            };
            if !self.nodes.contains_key(&next) {
                return Err(OverlayError::DeadLink {
                    at: cur,
                    to: next,
                    delivered_hops: path.len(),
                });
            }
            path.push(next);
            cur = next;
            if path.len() > max_hops {
                return Err(OverlayError::RoutingStuck { at: cur, key });
            }
        }
    }

    /// Protocol-path join via `bootstrap`: locate the successor by routing,
    /// splice into the ring, and populate the finger table with routed
    /// lookups (piggybacking on already-known links where possible).
    pub fn join(&mut self, new_node: NodeId, bootstrap: NodeId) -> Result<JoinStats, OverlayError> {
        if !self.space.contains(new_node.addr()) {
            return Err(OverlayError::OutOfSpace(new_node));
        }
        if self.nodes.contains_key(&new_node) {
            return Err(OverlayError::IdCollision(new_node));
        }
        if !self.nodes.contains_key(&bootstrap) {
            return Err(OverlayError::BootstrapUnreachable(bootstrap));
        }

        let lookup_path = self.route(bootstrap, new_node)?;
        let successor = lookup_path.last().copied().unwrap_or(bootstrap);
        let predecessor = self.nodes[&successor].predecessor;
        let mut stats = JoinStats {
            lookup_hops: lookup_path.len(),
            messages: lookup_path.len() + 1 + 2,
            ..JoinStats::default()
        };

        self.nodes.insert(
            new_node,
            RoutingTable {
                node: new_node,
                successor,
                predecessor,
                shortcuts: Vec::new(),
                fingers_version: 0,
            },
        );
        self.nodes
            .get_mut(&successor)
            .expect("successor is the route terminal, hence live")
            .predecessor = new_node;
        // The successor's old predecessor may have crashed without repair
        // yet; the notification is then lost and stabilization heals it.
        if let Some(p) = self.nodes.get_mut(&predecessor) {
            p.successor = new_node;
        }
        self.version += 1;

        // Fingers, cheapest-first: targets in our own range or at an
        // already-found link need no lookup messages. The splice above IS
        // the join; if a finger lookup trips over a not-yet-repaired crash,
        // the table simply stays stale until the next lazy refresh.
        let mut table = self.nodes[&new_node].clone();
        let mut last_link = successor;
        let mut complete = true;
        for exponent in 0..self.space.bits() {
            let target = self.space.offset(new_node, Addr::pow2(exponent));
            if self.space.in_interval_oc(predecessor, new_node, target) {
                continue; // we are responsible for this target ourselves
            }
            let link = if self.space.in_interval_oc(new_node, last_link, target) {
                last_link
            } else {
                match self.route_inner(new_node, target, Some(&table)) {
                    Ok(path) => {
                        stats.finger_lookups += 1;
                        stats.finger_hops += path.len();
                        stats.messages += path.len() + 1;
                        path.last().copied().unwrap_or(new_node)
                    }
                    Err(OverlayError::DeadLink { delivered_hops, .. }) => {
                        stats.messages += delivered_hops + 1;
                        complete = false;
                        break;
                    }
                    Err(_) => {
                        complete = false;
                        break;
                    }
                }
            };
            if link == new_node {
                continue;
            }
            last_link = link;
            table.shortcuts.push(Shortcut { exponent, link });
        }
        table.fingers_version = if complete { self.version } else { 0 };
        self.nodes.insert(new_node, table);
        Ok(stats)
    }

    /// Graceful departure: neighbors are rewired immediately.
    pub fn leave(&mut self, node: NodeId) -> Result<(), OverlayError> {
        let table = self
            .nodes
            .remove(&node)
            .ok_or(OverlayError::UnknownNode(node))?;
        if let Some(s) = self.nodes.get_mut(&table.successor) {
            s.predecessor = table.predecessor;
        }
        if let Some(p) = self.nodes.get_mut(&table.predecessor) {
            p.successor = table.successor;
        }
        self.version += 1;
        Ok(())
    }

    /// Silent crash: the node vanishes, neighbor pointers stay stale until
    /// the next stabilization round.
    pub fn fail(&mut self, node: NodeId) -> Result<(), OverlayError> {
        self.nodes
            .remove(&node)
            .ok_or(OverlayError::UnknownNode(node))?;
        self.version += 1;
        Ok(())
    }

    /// One stabilization round: every live node re-resolves its successor
    /// and predecessor. Repairs any number of silent failures in one round;
    /// returns how many pointers were fixed.
    pub fn stabilize_round(&mut self) -> usize {
        let ids = self.member_ids();
        let n = ids.len();
        let mut fixes = 0;
        for (i, id) in ids.iter().enumerate() {
            let successor = ids[(i + 1) % n];
            let predecessor = ids[(i + n - 1) % n];
            let t = self.nodes.get_mut(id).expect("live");
            if t.successor != successor {
                t.successor = successor;
                fixes += 1;
            }
            if t.predecessor != predecessor {
                t.predecessor = predecessor;
                fixes += 1;
            }
        }
        fixes
    }

    /// The broadcast children of `node` for the address range
    /// `(node, limit)`: distinct links in range, each delegated the
    /// sub-range up to the next link.
    pub fn broadcast_children(
        &mut self,
        node: NodeId,
        limit: NodeId,
    ) -> Vec<(NodeId, NodeId)> {
        self.refresh_fingers(node);
        let table = match self.nodes.get(&node) {
            Some(t) => t,
            None => return Vec::new(),
        };
        let space = self.space;
        let dist_limit = space.ring_distance(node, limit);
        let full_ring = dist_limit.is_zero();
        let mut links: Vec<NodeId> = std::iter::once(table.successor)
            .chain(table.shortcuts.iter().map(|s| s.link))
            .filter(|l| {
                let d = space.ring_distance(node, *l);
                !d.is_zero() && (full_ring || d < dist_limit)
            })
            .collect();
        links.sort_by_key(|l| space.ring_distance(node, *l));
        links.dedup();
        let mut out = Vec::with_capacity(links.len());
        for (i, link) in links.iter().enumerate() {
            let sub_limit = links.get(i + 1).copied().unwrap_or(limit);
            out.push((*link, sub_limit));
        }
        out
    }

    /// Flood the whole overlay from `origin` by recursive address-range
    /// partitioning. Every live member receives the payload exactly once.
    pub fn broadcast(&mut self, origin: NodeId) -> Result<BroadcastOutcome, OverlayError> {
        if !self.nodes.contains_key(&origin) {
            return Err(OverlayError::UnknownNode(origin));
        }
        let mut delivered = vec![origin];
        let mut seen: std::collections::BTreeSet<NodeId> = delivered.iter().copied().collect();
        let mut messages = Vec::new();
        let mut queue: VecDeque<(NodeId, NodeId, NodeId)> = self
            .broadcast_children(origin, origin)
            .into_iter()
            .map(|(child, limit)| (origin, child, limit))
            .collect();
        while let Some((from, node, limit)) = queue.pop_front() {
            messages.push(BroadcastMessage {
                from,
                to: node,
                limit,
            });
            let first_delivery = seen.insert(node);
            debug_assert!(first_delivery, "duplicate broadcast delivery to {node}");
            delivered.push(node);
            for (child, sub_limit) in self.broadcast_children(node, limit) {
                queue.push_back((node, child, sub_limit));
            }
        }
        Ok(BroadcastOutcome {
            delivered,
            messages,
        })
    }

    /// Verify the ring invariant: following successor pointers from the
    /// smallest id visits every live member exactly once in sorted order,
    /// and predecessor pointers mirror successor pointers.
    pub fn check_ring(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Ok(());
        }
        let ids = self.member_ids();
        let n = ids.len();
        for (i, id) in ids.iter().enumerate() {
            let t = &self.nodes[id];
            let expect_succ = ids[(i + 1) % n];
            let expect_pred = ids[(i + n - 1) % n];
            if t.successor != expect_succ {
                return Err(format!(
                    "node {id}: successor {} but ring order expects {expect_succ}",
                    t.successor
                ));
            }
            if t.predecessor != expect_pred {
                return Err(format!(
                    "node {id}: predecessor {} but ring order expects {expect_pred}",
                    t.predecessor
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_space() -> AddressSpace {
        AddressSpace::new(8).unwrap()
    }

    fn overlay_with(ids: &[u64]) -> Overlay {
        let space = small_space();
        let nodes: Vec<NodeId> = ids.iter().map(|v| space.id_from_u64(*v)).collect();
        Overlay::bulk_build(OverlayId::Directory, space, &nodes).unwrap()
    }

    /// Independent oracle: linear scan minimizing clockwise distance.
    fn brute_force_responsible(space: AddressSpace, ids: &[NodeId], key: NodeId) -> NodeId {
        *ids.iter()
            .min_by_key(|n| space.ring_distance(key, **n))
            .unwrap()
    }

    #[test]
    fn responsible_node_successor_convention() {
        let o = overlay_with(&[10, 20, 30]);
        let s = small_space();
        assert_eq!(o.responsible_node(s.id_from_u64(25)).unwrap(), s.id_from_u64(30));
        assert_eq!(o.responsible_node(s.id_from_u64(250)).unwrap(), s.id_from_u64(10));
        assert_eq!(o.responsible_node(s.id_from_u64(20)).unwrap(), s.id_from_u64(20));
    }

    #[test]
    fn responsible_node_single_member() {
        let o = overlay_with(&[10]);
        let s = small_space();
        for key in [0u64, 9, 10, 11, 255] {
            assert_eq!(o.responsible_node(s.id_from_u64(key)).unwrap(), s.id_from_u64(10));
        }
    }

    #[test]
    fn responsible_node_empty_overlay() {
        let o = Overlay::empty(OverlayId::Directory, small_space());
        assert_eq!(
            o.responsible_node(small_space().id_from_u64(3)),
            Err(OverlayError::EmptyOverlay)
        );
    }

    #[test]
    fn route_single_node_is_empty_path() {
        let mut o = overlay_with(&[42]);
        let s = small_space();
        let path = o.route(s.id_from_u64(42), s.id_from_u64(7)).unwrap();
        assert!(path.is_empty());
    }

    #[test]
    fn route_terminal_matches_brute_force_all_pairs() {
        let s = small_space();
        let ids: Vec<NodeId> = (0..32u64).map(|i| s.id_from_u64(i * 8 + 3)).collect();
        let mut o = Overlay::bulk_build(OverlayId::Directory, s, &ids).unwrap();
        for from in &ids {
            for key_val in 0..=255u64 {
                let key = s.id_from_u64(key_val);
                let path = o.route(*from, key).unwrap();
                let terminal = path.last().copied().unwrap_or(*from);
                assert_eq!(
                    terminal,
                    brute_force_responsible(s, &ids, key),
                    "from={from} key={key}"
                );
            }
        }
    }

    #[test]
    fn join_into_single_node_overlay() {
        let s = small_space();
        let mut o = Overlay::create(OverlayId::Directory, s, s.id_from_u64(10));
        o.join(s.id_from_u64(200), s.id_from_u64(10)).unwrap();
        let a = o.table(s.id_from_u64(10)).unwrap();
        let b = o.table(s.id_from_u64(200)).unwrap();
        assert_eq!(a.successor, s.id_from_u64(200));
        assert_eq!(a.predecessor, s.id_from_u64(200));
        assert_eq!(b.successor, s.id_from_u64(10));
        assert_eq!(b.predecessor, s.id_from_u64(10));
    }

    #[test]
    fn sequential_joins_match_sort_oracle() {
        let s = AddressSpace::new(16).unwrap();
        // Deterministic pseudo-random insertion order.
        let mut ids: Vec<NodeId> = (0..64u64).map(|i| s.id_from_u64((i * 977 + 131) % 65536)).collect();
        let mut o = Overlay::create(OverlayId::Directory, s, ids[0]);
        for id in &ids[1..] {
            o.join(*id, ids[0]).unwrap();
        }
        ids.sort();
        assert_eq!(o.member_ids(), ids);
        o.check_ring().unwrap();
    }

    #[test]
    fn join_with_duplicate_id_is_rejected() {
        let mut o = overlay_with(&[10, 20]);
        let s = small_space();
        assert_eq!(
            o.join(s.id_from_u64(20), s.id_from_u64(10)),
            Err(OverlayError::IdCollision(s.id_from_u64(20)))
        );
    }

    #[test]
    fn join_with_dead_bootstrap_is_rejected() {
        let mut o = overlay_with(&[10, 20]);
        let s = small_space();
        assert_eq!(
            o.join(s.id_from_u64(99), s.id_from_u64(42)),
            Err(OverlayError::BootstrapUnreachable(s.id_from_u64(42)))
        );
    }

    #[test]
    fn join_builds_same_fingers_as_recompute() {
        let s = AddressSpace::new(12).unwrap();
        let ids: Vec<NodeId> = (0..40u64).map(|i| s.id_from_u64((i * 101 + 7) % 4096)).collect();
        let mut o = Overlay::create(OverlayId::Directory, s, ids[0]);
        for id in &ids[1..] {
            o.join(*id, ids[0]).unwrap();
        }
        let last = *ids.last().unwrap();
        let joined = o.table(last).unwrap().shortcuts.clone();
        assert_eq!(joined, o.compute_fingers(last));
    }

    #[test]
    fn fail_then_stabilize_repairs_three_node_ring() {
        let mut o = overlay_with(&[10, 100, 200]);
        let s = small_space();
        o.fail(s.id_from_u64(100)).unwrap();
        o.stabilize_round();
        o.check_ring().unwrap();
        assert_eq!(o.len(), 2);
    }

    #[test]
    fn fail_ten_percent_then_stabilize() {
        let s = AddressSpace::new(16).unwrap();
        let ids: Vec<NodeId> = (0..128u64).map(|i| s.id_from_u64(i * 509 + 11)).collect();
        let mut o = Overlay::bulk_build(OverlayId::Directory, s, &ids).unwrap();
        let mut survivors = ids.clone();
        for i in 0..13 {
            let victim = ids[i * 9];
            o.fail(victim).unwrap();
            survivors.retain(|n| *n != victim);
        }
        o.stabilize_round();
        o.check_ring().unwrap();
        // Oracle: the ring must equal the sorted survivor ids.
        survivors.sort();
        assert_eq!(o.member_ids(), survivors);
    }

    #[test]
    fn leave_last_node_empties_overlay() {
        let s = small_space();
        let mut o = Overlay::create(OverlayId::Directory, s, s.id_from_u64(10));
        o.leave(s.id_from_u64(10)).unwrap();
        assert!(o.is_empty());
        assert_eq!(
            o.route(s.id_from_u64(10), s.id_from_u64(1)),
            Err(OverlayError::EmptyOverlay)
        );
    }

    #[test]
    fn leave_unknown_node_errors() {
        let mut o = overlay_with(&[10]);
        let s = small_space();
        assert_eq!(
            o.leave(s.id_from_u64(11)),
            Err(OverlayError::UnknownNode(s.id_from_u64(11)))
        );
        assert_eq!(
            o.fail(s.id_from_u64(11)),
            Err(OverlayError::UnknownNode(s.id_from_u64(11)))
        );
    }

    #[test]
    fn broadcast_single_node() {
        let mut o = overlay_with(&[42]);
        let out = o.broadcast(small_space().id_from_u64(42)).unwrap();
        assert_eq!(out.delivered, vec![small_space().id_from_u64(42)]);
        assert!(out.messages.is_empty());
    }

    #[test]
    fn broadcast_reaches_all_members_exactly_once() {
        let s = AddressSpace::new(16).unwrap();
        let ids: Vec<NodeId> = (0..50u64).map(|i| s.id_from_u64(i * 1291 + 17)).collect();
        let mut o = Overlay::bulk_build(OverlayId::Directory, s, &ids).unwrap();
        for origin in [ids[0], ids[20], ids[49]] {
            let out = o.broadcast(origin).unwrap();
            let mut delivered = out.delivered.clone();
            delivered.sort();
            delivered.dedup();
            assert_eq!(delivered.len(), out.delivered.len(), "duplicate delivery");
            // Oracle: delivery set equals the membership set.
            let mut members = o.member_ids();
            members.sort();
            assert_eq!(delivered, members);
            assert_eq!(out.messages.len(), ids.len() - 1);
        }
    }

    #[test]
    fn bulk_build_matches_sequential_joins() {
        let s = AddressSpace::new(16).unwrap();
        let ids: Vec<NodeId> = (0..24u64).map(|i| s.id_from_u64(i * 2711 + 5)).collect();
        let mut seq = Overlay::create(OverlayId::Directory, s, ids[0]);
        for id in &ids[1..] {
            seq.join(*id, ids[0]).unwrap();
        }
        let mut bulk = Overlay::bulk_build(OverlayId::Directory, s, &ids).unwrap();
        seq.refresh_all_fingers();
        bulk.refresh_all_fingers();
        for id in &ids {
            let a = seq.table(*id).unwrap();
            let b = bulk.table(*id).unwrap();
            assert_eq!(a.successor, b.successor);
            assert_eq!(a.predecessor, b.predecessor);
            assert_eq!(a.shortcuts, b.shortcuts);
        }
    }

    #[test]
    fn route_after_churn_matches_live_responsibility() {
        let s = AddressSpace::new(16).unwrap();
        let ids: Vec<NodeId> = (0..48u64).map(|i| s.id_from_u64(i * 1009 + 3)).collect();
        let mut o = Overlay::bulk_build(OverlayId::Directory, s, &ids).unwrap();
        o.fail(ids[7]).unwrap();
        o.leave(ids[21]).unwrap();
        o.stabilize_round();
        let live = o.member_ids();
        for key_val in (0..65536u64).step_by(997) {
            let key = s.id_from_u64(key_val);
            let path = o.route(live[0], key).unwrap();
            let terminal = path.last().copied().unwrap_or(live[0]);
            assert_eq!(terminal, brute_force_responsible(s, &live, key));
        }
    }
}
