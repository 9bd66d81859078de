//! Experiment runners. Each takes a validated [`ScenarioConfig`] and
//! produces a [`MetricsReport`] that is byte-identical across reruns with
//! the same (config, seed).
//!
//! * `join_latency` - a fresh peer joins the directory overlay and then `k`
//!   profile overlays; reports per-phase simulated time and message counts
//!   over seeded trials, for a list of directory sizes. Absolute times are
//!   message counts times sampled latencies; the interesting output is the
//!   growth shape across sizes, not the values themselves.
//! * `churn_availability` - one profile overlay whose owner goes offline;
//!   members churn with exponential sessions; periodic probes fetch the
//!   owner's posts and the success fraction is the availability.
//! * `demo` and `invariants` - scripted workflow and the invariant battery,
//!   reported as pass/fail rows.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::addr::{Addr, AddressSpace, NodeId};
use crate::crypto::{static_provider, CryptoProvider, Digest};
use crate::dht::{Dht, DhtConfig, DhtKey};
use crate::directory::{lookup_active, publish_active};
use crate::identity::{create_identity, issue_member_cert, Identity, MemberCertificate, PublicInfo};
use crate::overlay::{Overlay, OverlayError, OverlayId};
use crate::profile::{PostKind, ProfileNet};
use crate::sim::config::{ExperimentKind, ScenarioConfig, Violation};
use crate::sim::demo::{run_demo, DemoReport};
use crate::sim::report::MetricsReport;
use crate::sim::{
    derive_rng, run_broadcast_sim, sample_exp, LatencyModel, LatencySampler, Scheduler,
    MAINTENANCE_INTERVAL_SECS,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration ({} violation(s))", .0.len())]
    InvalidConfig(Vec<Violation>),
}

pub fn provider_for(config: &ScenarioConfig) -> &'static dyn CryptoProvider {
    static_provider(&config.provider)
}

/// Validate and dispatch. Identical (config, seed) gives identical report
/// bytes.
pub fn run(config: &ScenarioConfig) -> Result<MetricsReport, SimError> {
    let violations = config.validate();
    if !violations.is_empty() {
        return Err(SimError::InvalidConfig(violations));
    }
    Ok(match config.experiment {
        ExperimentKind::JoinLatency => join_latency_experiment(config),
        ExperimentKind::ChurnAvailability => churn_availability_experiment(config),
        ExperimentKind::Demo => demo_report(config, run_demo(config)),
        ExperimentKind::Invariants => battery_report(config, invariant_battery(config.seed)),
    })
}

// ---------------------------------------------------------------------------
// Join latency
// ---------------------------------------------------------------------------

const JOIN_PHASES: [&str; 3] = ["directory_join", "active_lookup", "profile_join"];

struct JoinTrialWorld {
    space: AddressSpace,
    provider: &'static dyn CryptoProvider,
    directory: Dht,
    profiles: Vec<ProfileNet>,
    credentials: Vec<MemberCertificate>,
    peer: Identity,
    bootstrap: NodeId,
    latency: LatencySampler,
    phase_secs: [f64; 3],
    phase_msgs: [usize; 3],
}

impl JoinTrialWorld {
    fn directory_phase(&mut self) -> f64 {
        let stats = self
            .directory
            .join(self.peer.node_id(self.space), self.bootstrap)
            .expect("measured directory join on a stable ring");
        let secs = self.latency.chain(stats.messages);
        self.phase_msgs[0] = stats.messages;
        self.phase_secs[0] = secs;
        secs
    }

    fn lookup_phase(&mut self, now: f64) -> f64 {
        let from = self.peer.node_id(self.space);
        let mut messages = 0;
        for profile in &self.profiles {
            let (_, msgs) = lookup_active(
                &mut self.directory,
                from,
                &profile.owner_cert_hash,
                now,
            )
            .expect("active lookup on a stable ring");
            messages += msgs;
        }
        let secs = self.latency.chain(messages);
        self.phase_msgs[1] = messages;
        self.phase_secs[1] = secs;
        secs
    }

    fn profile_phase(&mut self, now: f64) -> f64 {
        let from = self.peer.node_id(self.space);
        let mut messages = 0;
        for (profile, credential) in self.profiles.iter_mut().zip(&self.credentials) {
            let (active, _) = lookup_active(&mut self.directory, from, &profile.owner_cert_hash, now)
                .expect("bootstrap list");
            let (_, msgs) = profile
                .join(&self.peer, Some(credential), &active, self.provider, now)
                .expect("measured profile join");
            messages += msgs;
        }
        let secs = self.latency.chain(messages);
        self.phase_msgs[2] = messages;
        self.phase_secs[2] = secs;
        secs
    }
}

fn random_node_ids(
    space: AddressSpace,
    rng: &mut ChaCha20Rng,
    count: usize,
    taken: &mut BTreeSet<NodeId>,
) -> Vec<NodeId> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut bytes = [0u8; 32];
        rng.fill(&mut bytes);
        let id = NodeId::from_addr(Addr::from_be_bytes(bytes).mask_bits(space.bits()));
        if taken.insert(id) {
            out.push(id);
        }
    }
    out
}

fn build_join_trial(config: &ScenarioConfig, n: usize, seed: u64) -> JoinTrialWorld {
    let space = AddressSpace::new(config.address_bits).expect("validated");
    let provider = provider_for(config);
    let dht_config = DhtConfig {
        replication: config.replication,
        ..DhtConfig::default()
    };
    let mut setup_rng = derive_rng(seed, "join.setup");
    let mut identity_rng = derive_rng(seed, "join.identities");

    // Profile overlays whose members are also directory members.
    let k = config.profiles_per_peer;
    let mut profiles = Vec::with_capacity(k);
    let mut credentials = Vec::with_capacity(k);
    let mut member_nodes: Vec<NodeId> = Vec::new();
    let peer = create_identity(
        PublicInfo::new("measured peer", "peer@sim.local", &[]),
        space,
        provider,
        &mut identity_rng,
        0,
    )
    .expect("valid info");
    for p in 0..k {
        let size = config.profile_sizes[p % config.profile_sizes.len()].max(1);
        let owner = create_identity(
            PublicInfo::new(&format!("owner {p}"), &format!("owner{p}@sim.local"), &[]),
            space,
            provider,
            &mut identity_rng,
            0,
        )
        .expect("valid info");
        let mut members = Vec::with_capacity(size.saturating_sub(1));
        for m in 0..size.saturating_sub(1) {
            let identity = create_identity(
                PublicInfo::new(&format!("member {p}.{m}"), &format!("m{p}x{m}@sim.local"), &[]),
                space,
                provider,
                &mut identity_rng,
                0,
            )
            .expect("valid info");
            let credential =
                issue_member_cert(&owner, &identity.certificate, provider, 0);
            members.push((identity, credential));
        }
        credentials.push(issue_member_cert(&owner, &peer.certificate, provider, 0));
        let net = ProfileNet::build(&owner, &members, space, dht_config, provider)
            .expect("bulk profile build");
        member_nodes.push(owner.node_id(space));
        member_nodes.extend(members.iter().map(|(i, _)| i.node_id(space)));
        profiles.push(net);
    }

    // Directory ring: n anonymous nodes plus every profile member.
    let mut taken: BTreeSet<NodeId> = member_nodes.iter().copied().collect();
    taken.insert(peer.node_id(space));
    let mut directory_ids = random_node_ids(space, &mut setup_rng, n, &mut taken);
    directory_ids.extend(member_nodes.iter().copied());
    let overlay =
        Overlay::bulk_build(OverlayId::Directory, space, &directory_ids).expect("distinct ids");
    let mut directory = Dht::new(overlay, dht_config);

    // Profile members advertise themselves for bootstrap.
    for profile in &profiles {
        for node in profile.online_nodes() {
            publish_active(&mut directory, node, &profile.owner_cert_hash, 0.0)
                .expect("setup publish");
        }
    }

    let bootstrap = directory_ids[setup_rng.gen_range(0..directory_ids.len())];
    JoinTrialWorld {
        space,
        provider,
        directory,
        profiles,
        credentials,
        peer,
        bootstrap,
        latency: LatencySampler::new(config.latency, derive_rng(seed, "join.latency")),
        phase_secs: [0.0; 3],
        phase_msgs: [0; 3],
    }
}

/// One measured join: returns per-phase (seconds, messages).
pub fn run_join_trial(config: &ScenarioConfig, n: usize, seed: u64) -> ([f64; 3], [usize; 3]) {
    let mut world = build_join_trial(config, n, seed);
    let mut scheduler: Scheduler<JoinTrialWorld> = Scheduler::new();
    scheduler.schedule_at(0.0, |w, s| {
        let d = w.directory_phase();
        s.schedule_in(d, |w, s| {
            let d = w.lookup_phase(s.now());
            s.schedule_in(d, |w, s| {
                let d = w.profile_phase(s.now());
                s.schedule_in(d, |_, _| {});
            });
        });
    });
    scheduler.run_to_completion(&mut world);
    debug_assert!(world.directory.metrics().conserved());
    (world.phase_secs, world.phase_msgs)
}

pub fn join_latency_experiment(config: &ScenarioConfig) -> MetricsReport {
    let mut report = MetricsReport::new("join_latency");
    if let Some(note) = &config.note {
        report.note(note.clone());
    }
    report.note(
        "simulated time = message count x sampled latency; absolute values are \
         not comparable to wall-clock deployments",
    );
    let sizes = config.effective_join_sizes();
    let mut means = Vec::new();
    for &n in &sizes {
        let mut totals = Vec::new();
        for trial in 0..config.trials {
            let seed = config.seed.wrapping_add(trial as u64);
            let (secs, msgs) = run_join_trial(config, n, seed);
            log::debug!("join trial n={n} seed={seed}: secs={secs:?} msgs={msgs:?}");
            let total_secs: f64 = secs.iter().sum();
            let total_msgs: usize = msgs.iter().sum();
            for (i, phase) in JOIN_PHASES.iter().enumerate() {
                report.push(n as u64, seed, phase, "sim_seconds", secs[i]);
                report.push(n as u64, seed, phase, "messages", msgs[i] as f64);
            }
            report.push(n as u64, seed, "total", "sim_seconds", total_secs);
            report.push(n as u64, seed, "total", "messages", total_msgs as f64);
            totals.push(total_secs);
        }
        let mean = totals.iter().sum::<f64>() / totals.len() as f64;
        report.set_summary_f64(&format!("mean_total_secs_n{n}"), mean);
        means.push((n, mean));
    }
    if means.len() >= 2 {
        let monotone = means.windows(2).all(|w| w[1].1 >= w[0].1);
        let (n_min, t_min) = means[0];
        let (n_max, t_max) = means[means.len() - 1];
        let ratio = t_max / t_min;
        let bound = (n_max as f64 / n_min as f64) / 4.0;
        report.set_summary("monotone_nondecreasing", monotone);
        report.set_summary_f64("growth_ratio", ratio);
        report.set_summary_f64("sublinear_bound", bound);
        report.set_summary("sublinear_ok", ratio < bound);
    }
    report
}

// ---------------------------------------------------------------------------
// Churn availability
// ---------------------------------------------------------------------------

struct MemberSlot {
    identity: Identity,
    credential: MemberCertificate,
    online: bool,
}

struct ChurnWorld {
    profile: ProfileNet,
    members: Vec<MemberSlot>,
    provider: &'static dyn CryptoProvider,
    churn_rng: ChaCha20Rng,
    probe_rng: ChaCha20Rng,
    mean_session: f64,
    mean_downtime: f64,
    churn_targets: usize,
    expected_posts: BTreeSet<Digest>,
    last_post_at: u64,
    /// (time, online members, probe outcome; None = excluded, no prober)
    probe_log: Vec<(f64, usize, Option<bool>)>,
    last_ring_version: u64,
}

impl ChurnWorld {
    fn maintenance(&mut self, now: f64) {
        let version = self.profile.dht().overlay().version();
        if version != self.last_ring_version {
            self.profile.stabilize_round();
            self.profile.replica_repair(now);
            self.last_ring_version = self.profile.dht().overlay().version();
        }
    }

    fn session_end(&mut self, index: usize) {
        let node = self.members[index].identity.node_id(self.profile.space());
        if self.members[index].online && self.profile.is_online(node) {
            let _ = self.profile.fail_node(node);
            self.members[index].online = false;
        }
    }

    fn try_rejoin(&mut self, index: usize, now: f64) -> bool {
        let online = self.profile.online_nodes();
        if online.is_empty() {
            return false;
        }
        let bootstrap = online[self.churn_rng.gen_range(0..online.len())];
        let slot = &self.members[index];
        let joined = {
            let identity = slot.identity.clone();
            let credential = slot.credential.clone();
            self.profile.join(
                &identity,
                Some(&credential),
                &[bootstrap],
                self.provider,
                now,
            )
        };
        match joined {
            Ok(_) => {
                self.members[index].online = true;
                true
            }
            // Transient routing failures around un-stabilized crashes.
            Err(_) => false,
        }
    }

    fn probe(&mut self, now: f64) {
        let owner_node = self.profile.owner_node;
        let online: Vec<NodeId> = self
            .profile
            .online_nodes()
            .into_iter()
            .filter(|n| *n != owner_node)
            .collect();
        if online.is_empty() {
            self.probe_log.push((now, 0, None));
            return;
        }
        let prober = online[self.probe_rng.gen_range(0..online.len())];
        let Some(membership) = self.profile.membership_for_node(prober) else {
            self.probe_log.push((now, online.len(), Some(false)));
            return;
        };
        let fetched = self.profile.fetch_posts(
            &membership,
            0,
            self.last_post_at,
            None,
            None,
            self.provider,
            now,
        );
        let success = match fetched {
            Ok((posts, _)) => {
                let got: BTreeSet<Digest> = posts.iter().map(|p| p.post_hash()).collect();
                got == self.expected_posts
            }
            Err(_) => false,
        };
        self.probe_log.push((now, online.len(), Some(success)));
    }
}

fn schedule_session_end(scheduler: &mut Scheduler<ChurnWorld>, index: usize, at: f64) {
    scheduler.schedule_at(at, move |w, s| {
        w.session_end(index);
        let downtime = sample_exp(&mut w.churn_rng, w.mean_downtime);
        schedule_rejoin(s, index, s.now() + downtime);
    });
}

fn schedule_rejoin(scheduler: &mut Scheduler<ChurnWorld>, index: usize, at: f64) {
    scheduler.schedule_at(at, move |w, s| {
        if w.try_rejoin(index, s.now()) {
            let session = sample_exp(&mut w.churn_rng, w.mean_session);
            let end_at = s.now() + session;
            s.schedule_at(end_at, move |w, s| {
                w.session_end(index);
                let downtime = sample_exp(&mut w.churn_rng, w.mean_downtime);
                schedule_rejoin(s, index, s.now() + downtime);
            });
        } else {
            // Ring not ready (nobody online or transient routing failure);
            // try again after the next maintenance window.
            schedule_rejoin(s, index, s.now() + MAINTENANCE_INTERVAL_SECS);
        }
    });
}

pub fn churn_availability_experiment(config: &ScenarioConfig) -> MetricsReport {
    let mut report = MetricsReport::new("churn_availability");
    if let Some(note) = &config.note {
        report.note(note.clone());
    }
    let profile_size = config.profile_sizes[0];
    // `churn: null` means a stable membership: nobody ever goes offline
    // except the owner.
    let churn = config.churn;
    let seed = config.seed;
    let space = AddressSpace::new(config.address_bits).expect("validated");
    let provider = provider_for(config);
    let dht_config = DhtConfig {
        replication: config.replication,
        ..DhtConfig::default()
    };

    // Identities and the fully-online starting ring. The identity stream
    // does not depend on the replication factor, so paired-seed runs see
    // identical populations and churn timelines.
    let mut identity_rng = derive_rng(seed, "churn.identities");
    let owner = create_identity(
        PublicInfo::new("profile owner", "owner@sim.local", &[]),
        space,
        provider,
        &mut identity_rng,
        0,
    )
    .expect("valid info");
    let mut members = Vec::with_capacity(profile_size - 1);
    for m in 0..profile_size - 1 {
        let identity = create_identity(
            PublicInfo::new(&format!("member {m}"), &format!("m{m}@sim.local"), &[]),
            space,
            provider,
            &mut identity_rng,
            0,
        )
        .expect("valid info");
        let credential = issue_member_cert(&owner, &identity.certificate, provider, 0);
        members.push((identity, credential));
    }
    let profile = ProfileNet::build(&owner, &members, space, dht_config, provider)
        .expect("bulk profile build");

    let mut world = ChurnWorld {
        profile,
        members: members
            .into_iter()
            .map(|(identity, credential)| MemberSlot {
                identity,
                credential,
                online: true,
            })
            .collect(),
        provider,
        churn_rng: derive_rng(seed, "churn.sessions"),
        probe_rng: derive_rng(seed, "churn.probes"),
        mean_session: churn.map(|c| c.mean_session_secs).unwrap_or(f64::INFINITY),
        mean_downtime: churn.map(|c| c.mean_downtime_secs).unwrap_or(f64::INFINITY),
        churn_targets: 0,
        expected_posts: BTreeSet::new(),
        last_post_at: 0,
        probe_log: Vec::new(),
        last_ring_version: 0,
    };
    world.churn_targets = match churn {
        Some(c) => c
            .target_population
            .unwrap_or(world.members.len())
            .min(world.members.len()),
        None => 0,
    };

    // Owner writes its posts while everything is stable, then goes dark.
    let owner_m = world.profile.owner_membership();
    for p in 0..config.posts {
        let t = p as f64;
        let (hash, _) = world
            .profile
            .publish_post(
                &owner_m,
                &owner,
                PostKind::Status,
                format!("post {p}").as_bytes(),
                world.provider,
                t,
            )
            .expect("owner posts on a stable ring");
        world.expected_posts.insert(hash);
        world.last_post_at = t as u64;
    }

    let mut scheduler: Scheduler<ChurnWorld> = Scheduler::new();
    scheduler.schedule_at(60.0, |w: &mut ChurnWorld, _| {
        let owner_node = w.profile.owner_node;
        let _ = w.profile.fail_node(owner_node);
    });

    // Churn starts after a short stable window.
    let churn_members = world.churn_targets;
    for index in 0..churn_members {
        let first_end = 30.0 + sample_exp(&mut world.churn_rng, world.mean_session);
        schedule_session_end(&mut scheduler, index, first_end);
    }

    // Maintenance every 5 s, probes on the configured interval from t=90.
    fn maintenance_tick(w: &mut ChurnWorld, s: &mut Scheduler<ChurnWorld>, until: f64) {
        w.maintenance(s.now());
        let next = s.now() + MAINTENANCE_INTERVAL_SECS;
        if next <= until {
            s.schedule_at(next, move |w, s| maintenance_tick(w, s, until));
        }
    }
    fn probe_tick(w: &mut ChurnWorld, s: &mut Scheduler<ChurnWorld>, interval: f64, until: f64) {
        w.probe(s.now());
        let next = s.now() + interval;
        if next <= until {
            s.schedule_at(next, move |w, s| probe_tick(w, s, interval, until));
        }
    }
    log::debug!(
        "churn run: profile_size={profile_size} r={} seed={seed}",
        config.replication
    );
    let duration = config.duration_secs;
    let probe_interval = config.probe_interval_secs;
    scheduler.schedule_at(MAINTENANCE_INTERVAL_SECS, move |w, s| {
        maintenance_tick(w, s, duration)
    });
    scheduler.schedule_at(90.0_f64.min(duration), move |w, s| {
        probe_tick(w, s, probe_interval, duration)
    });

    scheduler.run_until(&mut world, duration);

    // Report: probe timeline plus the availability summary.
    let n = profile_size as u64;
    let mut successes = 0u64;
    let mut counted = 0u64;
    let mut excluded = 0u64;
    for (t, online, outcome) in &world.probe_log {
        report.push(n, seed, "probe", "sim_time_secs", *t);
        report.push(n, seed, "probe", "online_members", *online as f64);
        match outcome {
            Some(success) => {
                counted += 1;
                if *success {
                    successes += 1;
                }
                report.push(n, seed, "probe", "success", if *success { 1.0 } else { 0.0 });
            }
            None => {
                excluded += 1;
                report.push(n, seed, "probe", "success", -1.0);
            }
        }
    }
    let availability = if counted > 0 {
        successes as f64 / counted as f64
    } else {
        // No churn (or nobody probed): a fully idle overlay loses nothing.
        1.0
    };
    let metrics = world.profile.dht().metrics();
    report.set_summary_f64("availability", availability);
    report.set_summary("probes_counted", counted);
    report.set_summary("probes_excluded_no_member_online", excluded);
    report.set_summary("replication", config.replication as u64);
    report.set_summary("profile_size", profile_size as u64);
    report.set_summary("posts", config.posts as u64);
    report.set_summary("messages_sent", metrics.sent);
    report.set_summary("messages_delivered", metrics.delivered);
    report.set_summary("messages_dropped_dead_target", metrics.dropped_dead);
    report.set_summary("message_conservation_ok", metrics.conserved());
    report.set_summary("events_executed", scheduler.executed_events());
    report
}

// ---------------------------------------------------------------------------
// Demo / invariants as reports
// ---------------------------------------------------------------------------

fn demo_report(config: &ScenarioConfig, demo: DemoReport) -> MetricsReport {
    let mut report = MetricsReport::new("demo");
    if let Some(note) = &config.note {
        report.note(note.clone());
    }
    for assertion in &demo.assertions {
        report.push(
            4,
            config.seed,
            &assertion.name,
            "pass",
            if assertion.passed { 1.0 } else { 0.0 },
        );
    }
    report.set_summary("all_passed", demo.all_passed());
    report.set_summary("transcript", demo.transcript.clone());
    report
}

fn battery_report(config: &ScenarioConfig, checks: Vec<CheckResult>) -> MetricsReport {
    let mut report = MetricsReport::new("invariants");
    let all = checks.iter().all(|c| c.passed);
    for check in &checks {
        report.push(
            0,
            config.seed,
            &check.name,
            "pass",
            if check.passed { 1.0 } else { 0.0 },
        );
    }
    report.set_summary("all_passed", all);
    report.set_summary(
        "failed",
        checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect::<Vec<_>>(),
    );
    report
}

// ---------------------------------------------------------------------------
// Invariant battery
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn from(name: &str, result: Result<String, String>) -> CheckResult {
        match result {
            Ok(detail) => CheckResult {
                name: name.into(),
                passed: true,
                detail,
            },
            Err(detail) => CheckResult {
                name: name.into(),
                passed: false,
                detail,
            },
        }
    }
}

/// Headless property suite: every library-level invariant that does not
/// need the long acceptance runs. Returns one result per check.
pub fn invariant_battery(seed: u64) -> Vec<CheckResult> {
    vec![
        CheckResult::from("ring_repair_under_churn", check_ring_repair(seed)),
        CheckResult::from("route_matches_responsibility_oracle", route_oracle_check(8, 32)),
        CheckResult::from("path_length_scaling", check_path_scaling(seed, 2_000)),
        CheckResult::from("broadcast_exactly_once", check_broadcast_exactly_once(seed)),
        CheckResult::from(
            "broadcast_conservation_mid_failure",
            check_broadcast_mid_failure(seed),
        ),
        CheckResult::from(
            "dht_matches_multimap_oracle",
            dht_against_multimap_oracle(seed, 100, 30),
        ),
        CheckResult::from("event_order_is_time_then_sequence", check_event_order()),
        CheckResult::from("report_determinism_double_run", check_determinism(seed)),
    ]
}

fn check_ring_repair(seed: u64) -> Result<String, String> {
    let space = AddressSpace::new(16).map_err(|e| e.to_string())?;
    let mut rng = derive_rng(seed, "battery.ring");
    let mut taken = BTreeSet::new();
    let ids = random_node_ids(space, &mut rng, 64, &mut taken);
    let mut overlay =
        Overlay::bulk_build(OverlayId::Directory, space, &ids).map_err(|e| e.to_string())?;
    let mut churn_events = 0;
    for round in 0..40 {
        for _ in 0..(rng.gen_range(1..4)) {
            let members = overlay.member_ids();
            match rng.gen_range(0..3) {
                0 => {
                    let new = random_node_ids(space, &mut rng, 1, &mut taken)[0];
                    let bootstrap = members[rng.gen_range(0..members.len())];
                    // A join routed over a not-yet-stabilized ring may hit a
                    // dead link; the client retries after repair.
                    if let Err(OverlayError::DeadLink { .. } | OverlayError::RoutingStuck { .. }) =
                        overlay.join(new, bootstrap)
                    {
                        overlay.stabilize_round();
                        overlay.join(new, bootstrap).map_err(|e| e.to_string())?;
                    }
                }
                1 if members.len() > 3 => {
                    let victim = members[rng.gen_range(0..members.len())];
                    overlay.leave(victim).map_err(|e| e.to_string())?;
                }
                _ if members.len() > 3 => {
                    let victim = members[rng.gen_range(0..members.len())];
                    overlay.fail(victim).map_err(|e| e.to_string())?;
                }
                _ => {}
            }
            churn_events += 1;
        }
        overlay.stabilize_round();
        overlay
            .check_ring()
            .map_err(|e| format!("round {round}: {e}"))?;
    }
    Ok(format!("{churn_events} churn events, ring valid after every round"))
}

/// Exhaustive small-space check: every (source, key) pair routes to exactly
/// the node a brute-force linear scan says is responsible.
pub fn route_oracle_check(bits: u16, nodes: usize) -> Result<String, String> {
    let space = AddressSpace::new(bits).map_err(|e| e.to_string())?;
    let capacity = 1u64 << bits;
    let step = capacity / nodes as u64;
    let ids: Vec<NodeId> = (0..nodes as u64).map(|i| space.id_from_u64(i * step + 3)).collect();
    let mut overlay =
        Overlay::bulk_build(OverlayId::Directory, space, &ids).map_err(|e| e.to_string())?;
    let mut checked = 0u64;
    for from in &ids {
        for key_val in 0..capacity {
            let key = space.id_from_u64(key_val);
            let path = overlay.route(*from, key).map_err(|e| e.to_string())?;
            let terminal = path.last().copied().unwrap_or(*from);
            // Independent oracle: linear scan minimizing clockwise distance.
            let expect = *ids
                .iter()
                .min_by_key(|n| space.ring_distance(key, **n))
                .expect("nodes non-empty");
            if terminal != expect {
                return Err(format!(
                    "route({from}, {key}) ended at {terminal}, oracle says {expect}"
                ));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} (source, key) pairs match the oracle"))
}

/// Mean greedy-route hop counts for rings of each size, using `routes`
/// seeded random routes per size.
pub fn routing_scaling_stats(seed: u64, sizes: &[usize], routes: usize) -> Vec<(usize, f64)> {
    let space = AddressSpace::default();
    let mut out = Vec::new();
    for &n in sizes {
        let mut rng = derive_rng(seed, &format!("battery.scaling.{n}"));
        let mut taken = BTreeSet::new();
        let ids = random_node_ids(space, &mut rng, n, &mut taken);
        let mut overlay = Overlay::bulk_build(OverlayId::Directory, space, &ids).expect("distinct");
        let mut hops = 0usize;
        for _ in 0..routes {
            let from = ids[rng.gen_range(0..ids.len())];
            let key = random_node_ids(space, &mut rng, 1, &mut BTreeSet::new())[0];
            let path = overlay.route(from, key).expect("stable ring routes");
            hops += path.len();
        }
        out.push((n, hops as f64 / routes as f64));
    }
    out
}

fn check_path_scaling(seed: u64, routes: usize) -> Result<String, String> {
    let stats = routing_scaling_stats(seed, &[32, 128, 512], routes);
    for &(n, mean) in &stats {
        let bound = 1.5 * (n as f64).log2();
        if mean > bound {
            return Err(format!("mean hops {mean:.2} for n={n} exceeds {bound:.2}"));
        }
    }
    if !stats.windows(2).all(|w| w[1].1 >= w[0].1) {
        return Err(format!("mean hops not nondecreasing: {stats:?}"));
    }
    let ratio = stats[stats.len() - 1].1 / stats[0].1;
    if ratio >= 4.0 {
        return Err(format!("growth ratio {ratio:.2} not sublinear"));
    }
    Ok(format!(
        "means {:?}, growth ratio {ratio:.2}",
        stats.iter().map(|(n, m)| format!("{n}:{m:.2}")).collect::<Vec<_>>()
    ))
}

fn check_broadcast_exactly_once(seed: u64) -> Result<String, String> {
    let space = AddressSpace::default();
    let mut rng = derive_rng(seed, "battery.broadcast");
    let mut taken = BTreeSet::new();
    let ids = random_node_ids(space, &mut rng, 200, &mut taken);
    let mut overlay =
        Overlay::bulk_build(OverlayId::Directory, space, &ids).map_err(|e| e.to_string())?;
    for _ in 0..3 {
        let origin = ids[rng.gen_range(0..ids.len())];
        let outcome = overlay.broadcast(origin).map_err(|e| e.to_string())?;
        let mut delivered = outcome.delivered.clone();
        delivered.sort();
        let with_dups = delivered.len();
        delivered.dedup();
        if delivered.len() != with_dups {
            return Err("duplicate delivery".into());
        }
        if delivered != overlay.member_ids() {
            return Err("broadcast missed members".into());
        }
    }
    Ok("3 origins, 200 nodes, exactly-once everywhere".into())
}

fn check_broadcast_mid_failure(seed: u64) -> Result<String, String> {
    let space = AddressSpace::default();
    let mut rng = derive_rng(seed, "battery.bcfail");
    let mut taken = BTreeSet::new();
    let ids = random_node_ids(space, &mut rng, 48, &mut taken);
    let origin = ids[0];
    let mut planner =
        Overlay::bulk_build(OverlayId::Directory, space, &ids).map_err(|e| e.to_string())?;
    let plan = planner.broadcast(origin).map_err(|e| e.to_string())?;
    let relays: BTreeSet<NodeId> = plan.messages.iter().map(|m| m.from).collect();
    let leaf = plan
        .messages
        .iter()
        .filter(|m| m.from == origin)
        .map(|m| m.to)
        .find(|n| !relays.contains(n))
        .ok_or("no leaf child of origin")?;

    let overlay =
        Overlay::bulk_build(OverlayId::Directory, space, &ids).map_err(|e| e.to_string())?;
    let latency = LatencySampler::new(
        LatencyModel::Constant { value_secs: 0.1 },
        derive_rng(seed, "battery.bcfail.lat"),
    );
    let world = run_broadcast_sim(overlay, origin, Some((leaf, 0.05)), latency);
    let mut delivered = world.delivered.clone();
    delivered.sort();
    delivered.dedup();
    if delivered.len() != world.delivered.len() {
        return Err("duplicate delivery under failure".into());
    }
    if delivered.contains(&leaf) {
        return Err("dead node received the payload".into());
    }
    if delivered.len() != ids.len() - 1 {
        return Err(format!(
            "expected every live node ({}), got {}",
            ids.len() - 1,
            delivered.len()
        ));
    }
    if !world.metrics.conserved() {
        return Err(format!("conservation broken: {:?}", world.metrics));
    }
    Ok(format!(
        "delivered {} of {} nodes, 1 message dropped at the dead target, conservation holds",
        delivered.len(),
        ids.len()
    ))
}

/// Reference model for criterion-level DHT checks: a centralized multimap
/// with TTLs, driven by the same operation stream as the real DHT.
pub fn dht_against_multimap_oracle(
    seed: u64,
    sequences: usize,
    ops_per_sequence: usize,
) -> Result<String, String> {
    use std::collections::BTreeMap;
    let space = AddressSpace::new(32).map_err(|e| e.to_string())?;
    let mut checked_gets = 0u64;
    for sequence in 0..sequences {
        let mut rng = derive_rng(seed, &format!("battery.dht.{sequence}"));
        let mut taken = BTreeSet::new();
        let node_count = rng.gen_range(4..24);
        let ids = random_node_ids(space, &mut rng, node_count, &mut taken);
        let overlay = Overlay::bulk_build(OverlayId::Directory, space, &ids)
            .map_err(|e| e.to_string())?;
        let mut dht = Dht::new(overlay, DhtConfig::default());

        // Oracle: key -> value -> (inserted_at, ttl), same expiry rule.
        let mut oracle: BTreeMap<u8, BTreeMap<Vec<u8>, (f64, f64)>> = BTreeMap::new();
        let mut now = 0.0_f64;
        for _ in 0..ops_per_sequence {
            let key_tag = rng.gen_range(0..8u8);
            let key = DhtKey::from_bytes(space, &[b'k', key_tag]);
            let from = ids[rng.gen_range(0..ids.len())];
            match rng.gen_range(0..10) {
                0..=4 => {
                    let value = vec![b'v', rng.gen_range(0..6u8)];
                    let ttl = rng.gen_range(5.0..50.0);
                    dht.put(from, key, &value, ttl, now).map_err(|e| e.to_string())?;
                    oracle.entry(key_tag).or_default().insert(value, (now, ttl));
                }
                5..=8 => {
                    let got: BTreeSet<Vec<u8>> = dht
                        .get(from, key, now)
                        .map_err(|e| e.to_string())?
                        .values
                        .into_iter()
                        .collect();
                    let expect: BTreeSet<Vec<u8>> = oracle
                        .get(&key_tag)
                        .map(|m| {
                            m.iter()
                                .filter(|(_, (at, ttl))| now <= at + ttl)
                                .map(|(v, _)| v.clone())
                                .collect()
                        })
                        .unwrap_or_default();
                    if got != expect {
                        return Err(format!(
                            "sequence {sequence}: key {key_tag} mismatch at t={now}: \
                             dht={got:?} oracle={expect:?}"
                        ));
                    }
                    checked_gets += 1;
                }
                _ => {
                    now += rng.gen_range(0.0..30.0);
                }
            }
        }
    }
    Ok(format!("{checked_gets} gets matched the centralized multimap oracle"))
}

fn check_event_order() -> Result<String, String> {
    let mut scheduler: Scheduler<Vec<(u64, u64)>> = Scheduler::new();
    let mut log: Vec<(u64, u64)> = Vec::new();
    for i in 0..50u64 {
        let at = (i * 7919 % 13) as f64;
        scheduler.schedule_at(at, move |w: &mut Vec<(u64, u64)>, s| {
            w.push(((s.now() * 1000.0) as u64, i));
        });
    }
    scheduler.run_to_completion(&mut log);
    let mut sorted = log.clone();
    sorted.sort();
    if log != sorted {
        return Err("events executed out of (time, sequence) order".into());
    }
    Ok("50 events executed in (fire_at, sequence) order".into())
}

fn check_determinism(seed: u64) -> Result<String, String> {
    let mut config = ScenarioConfig::default_for(ExperimentKind::JoinLatency);
    config.seed = seed;
    config.join_sizes = vec![16, 32];
    config.trials = 2;
    config.profile_sizes = vec![8];
    let a = join_latency_experiment(&config);
    let b = join_latency_experiment(&config);
    if a.to_csv() != b.to_csv() || a.to_json_pretty() != b.to_json_pretty() {
        return Err("double run produced different report bytes".into());
    }
    let demo_a = run_demo(&ScenarioConfig::default_for(ExperimentKind::Demo));
    let demo_b = run_demo(&ScenarioConfig::default_for(ExperimentKind::Demo));
    if demo_a.transcript != demo_b.transcript {
        return Err("demo transcript differs across identical runs".into());
    }
    Ok("join-latency report and demo transcript byte-identical across reruns".into())
}
