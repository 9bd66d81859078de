//! Deterministic discrete-event simulation.
//!
//! One [`Scheduler`] drives one simulation: a virtual fractional-second
//! clock and a queue of events ordered by `(fire_at, sequence)`, where the
//! sequence number is a total-order tiebreaker. Every run is a pure
//! function of (scenario config, seed): randomness comes only from named
//! ChaCha20 streams derived from the seed, state lives in ordered
//! containers, and nothing reads the wall clock.
//!
//! The scheduler enforces causality (events may only be scheduled at or
//! after the current time) and clock monotonicity (executed events fire in
//! nondecreasing time order); both are asserted, not assumed.

pub mod config;
pub mod demo;
pub mod experiments;
pub mod report;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::addr::NodeId;
use crate::crypto::sha256_parts;
use crate::overlay::Overlay;

pub use config::{ChurnModel, ExperimentKind, LatencyModel, ScenarioConfig, Violation};
pub use report::{MetricsReport, MetricsRow};

/// Stabilization and replica repair cadence, in simulated seconds.
pub const MAINTENANCE_INTERVAL_SECS: f64 = 5.0;

/// Derive an independent named random stream from the scenario seed.
/// Streams with different labels never correlate, so e.g. the churn
/// timeline stays identical while the replication factor varies.
pub fn derive_rng(seed: u64, label: &str) -> ChaCha20Rng {
    let digest = sha256_parts(&[b"socialmesh.stream.", &seed.to_be_bytes(), label.as_bytes()]);
    ChaCha20Rng::from_seed(digest.0)
}

/// Exponential sample with the given mean.
pub fn sample_exp(rng: &mut ChaCha20Rng, mean: f64) -> f64 {
    let u: f64 = rng.gen();
    -mean * (1.0 - u).ln()
}

/// Per-message latency sampling from the configured model.
pub struct LatencySampler {
    model: LatencyModel,
    rng: ChaCha20Rng,
}

impl LatencySampler {
    pub fn new(model: LatencyModel, rng: ChaCha20Rng) -> LatencySampler {
        LatencySampler { model, rng }
    }

    pub fn sample(&mut self) -> f64 {
        match self.model {
            LatencyModel::Constant { value_secs } => value_secs,
            LatencyModel::Uniform { min_secs, max_secs } => {
                min_secs + self.rng.gen::<f64>() * (max_secs - min_secs)
            }
        }
    }

    /// Total time of `n` sequential messages.
    pub fn chain(&mut self, n: usize) -> f64 {
        (0..n).map(|_| self.sample()).sum()
    }
}

/// Message conservation counters: everything sent is eventually either
/// delivered or dropped because its target was dead.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrafficMetrics {
    pub sent: u64,
    pub delivered: u64,
    pub dropped_dead: u64,
}

impl TrafficMetrics {
    /// Count an RPC chain that completed (each hop delivered).
    pub fn delivered_chain(&mut self, n: usize) {
        self.sent += n as u64;
        self.delivered += n as u64;
    }

    pub fn conserved(&self) -> bool {
        self.sent == self.delivered + self.dropped_dead
    }
}

/// A deliverable closure: the event's effect on the world, with the
/// scheduler available for follow-up events.
type Action<W> = Box<dyn FnOnce(&mut W, &mut Scheduler<W>)>;

struct ScheduledEvent<W> {
    fire_at: f64,
    sequence: u64,
    action: Action<W>,
}

impl<W> PartialEq for ScheduledEvent<W> {
    fn eq(&self, other: &Self) -> bool {
        self.sequence == other.sequence
    }
}

impl<W> Eq for ScheduledEvent<W> {}

impl<W> PartialOrd for ScheduledEvent<W> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<W> Ord for ScheduledEvent<W> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Inverted: BinaryHeap is a max-heap, we want the earliest event.
        other
            .fire_at
            .total_cmp(&self.fire_at)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

/// The event loop for one simulation over world state `W`.
pub struct Scheduler<W> {
    now: f64,
    sequence: u64,
    executed: u64,
    queue: BinaryHeap<ScheduledEvent<W>>,
}

impl<W> Default for Scheduler<W> {
    fn default() -> Self {
        Scheduler::new()
    }
}

impl<W> Scheduler<W> {
    pub fn new() -> Scheduler<W> {
        Scheduler {
            now: 0.0,
            sequence: 0,
            executed: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn executed_events(&self) -> u64 {
        self.executed
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    /// Schedule an event at an absolute time, which must not lie in the
    /// past (causality: an event can only create consequences at or after
    /// its own execution time).
    pub fn schedule_at(
        &mut self,
        fire_at: f64,
        action: impl FnOnce(&mut W, &mut Scheduler<W>) + 'static,
    ) {
        assert!(
            fire_at >= self.now,
            "causality violation: scheduling at {fire_at} while now is {}",
            self.now
        );
        assert!(fire_at.is_finite(), "event time must be finite");
        let sequence = self.sequence;
        self.sequence += 1;
        self.queue.push(ScheduledEvent {
            fire_at,
            sequence,
            action: Box::new(action),
        });
    }

    pub fn schedule_in(
        &mut self,
        delay: f64,
        action: impl FnOnce(&mut W, &mut Scheduler<W>) + 'static,
    ) {
        assert!(delay >= 0.0, "negative delay {delay}");
        self.schedule_at(self.now + delay, action);
    }

    /// Run events with `fire_at <= limit`, then advance the clock to
    /// `limit`.
    pub fn run_until(&mut self, world: &mut W, limit: f64) {
        while let Some(next_at) = self.queue.peek().map(|e| e.fire_at) {
            if next_at > limit {
                break;
            }
            let event = self.queue.pop().expect("peeked");
            debug_assert!(
                event.fire_at >= self.now,
                "clock monotonicity violated: {} < {}",
                event.fire_at,
                self.now
            );
            self.now = event.fire_at;
            self.executed += 1;
            (event.action)(world, self);
        }
        if limit > self.now {
            self.now = limit;
        }
    }

    /// Drain the queue completely.
    pub fn run_to_completion(&mut self, world: &mut W) {
        while let Some(event) = self.queue.pop() {
            debug_assert!(event.fire_at >= self.now);
            self.now = event.fire_at;
            self.executed += 1;
            (event.action)(world, self);
        }
    }
}

/// World state for the event-driven broadcast simulation; used to exercise
/// broadcast behavior under mid-flight failures.
pub struct BroadcastSimWorld {
    pub overlay: Overlay,
    pub latency: LatencySampler,
    pub delivered: Vec<NodeId>,
    pub metrics: TrafficMetrics,
}

/// Run a broadcast as individual message events, optionally crashing one
/// node at an absolute time while messages are in flight. Relays compute
/// their children when the payload arrives; a dead relay drops the message
/// (counted) along with its whole delegated range.
pub fn run_broadcast_sim(
    overlay: Overlay,
    origin: NodeId,
    fail_at: Option<(NodeId, f64)>,
    latency: LatencySampler,
) -> BroadcastSimWorld {
    let mut world = BroadcastSimWorld {
        overlay,
        latency,
        delivered: vec![origin],
        metrics: TrafficMetrics::default(),
    };
    let mut scheduler: Scheduler<BroadcastSimWorld> = Scheduler::new();
    if let Some((node, at)) = fail_at {
        scheduler.schedule_at(at, move |w, _| {
            let _ = w.overlay.fail(node);
        });
    }
    scheduler.schedule_at(0.0, move |w, s| {
        let children = w.overlay.broadcast_children(origin, origin);
        for (child, limit) in children {
            send_broadcast(w, s, child, limit);
        }
    });
    scheduler.run_to_completion(&mut world);
    world
}

fn send_broadcast(
    world: &mut BroadcastSimWorld,
    scheduler: &mut Scheduler<BroadcastSimWorld>,
    to: NodeId,
    limit: NodeId,
) {
    world.metrics.sent += 1;
    let delay = world.latency.sample();
    scheduler.schedule_in(delay, move |w, s| {
        if !w.overlay.contains(to) {
            w.metrics.dropped_dead += 1;
            return;
        }
        w.metrics.delivered += 1;
        w.delivered.push(to);
        let children = w.overlay.broadcast_children(to, limit);
        for (child, sub_limit) in children {
            send_broadcast(w, s, child, sub_limit);
        }
    });
}
