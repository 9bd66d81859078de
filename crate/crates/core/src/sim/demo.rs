//! Scripted end-to-end demo: four peers, one directory overlay, three
//! friendships.
//!
//! Alice befriends Bob and Carol; Bob also befriends Dave; Carol and Bob
//! are strangers. The script drives the full workflow - directory
//! publication, search, friendship mailboxes, profile overlays, private
//! messaging, revocation - and checks four things:
//!
//! 1. Bob and Carol (Alice's friends) read Alice's posts.
//! 2. Carol cannot join Bob's profile overlay (no credential from Bob).
//! 3. Bob's private message to Alice round-trips, owner-only.
//! 4. After Alice revokes Carol, Carol's rejoin fails permanently.
//!
//! The transcript is byte-identical for a fixed seed.

use std::fmt::Write as _;

use rand_chacha::ChaCha20Rng;

use crate::addr::AddressSpace;
use crate::crypto::{static_provider, CryptoProvider};
use crate::dht::{Dht, DhtConfig};
use crate::directory::{
    check_requests, check_responses, lookup_active, publish_active, publish_directory_entry,
    search_directory, send_friend_request, respond_to_request, DirectoryQuery,
    FriendshipDecision,
};
use crate::identity::{create_identity, revoke_member, Identity, MemberCertificate, PublicInfo};
use crate::overlay::{Overlay, OverlayId};
use crate::profile::{PmReadResult, PostKind, ProfileError, ProfileNet};
use crate::sim::{derive_rng, LatencySampler, ScenarioConfig};

#[derive(Clone, Debug)]
pub struct DemoAssertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct DemoReport {
    pub transcript: String,
    pub assertions: Vec<DemoAssertion>,
}

impl DemoReport {
    pub fn all_passed(&self) -> bool {
        !self.assertions.is_empty() && self.assertions.iter().all(|a| a.passed)
    }
}

struct DemoWorld {
    space: AddressSpace,
    provider: &'static dyn CryptoProvider,
    directory: Dht,
    latency: LatencySampler,
    identity_rng: ChaCha20Rng,
    message_rng: ChaCha20Rng,
    clock: f64,
    sent_so_far: u64,
    transcript: String,
    assertions: Vec<DemoAssertion>,
}

impl DemoWorld {
    /// Advance the clock by the latency of every message the directory (or
    /// a provided profile net) produced since the last call.
    fn tick(&mut self, profile: Option<&ProfileNet>) {
        let total = self.directory.metrics().sent
            + profile.map(|p| p.dht().metrics().sent).unwrap_or(0);
        let delta = total.saturating_sub(self.sent_so_far);
        self.sent_so_far = total;
        self.clock += self.latency.chain(delta as usize);
    }

    fn say(&mut self, line: impl AsRef<str>) {
        let _ = writeln!(self.transcript, "[t={:8.3}s] {}", self.clock, line.as_ref());
    }

    fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        let detail = detail.into();
        let verdict = if passed { "PASS" } else { "FAIL" };
        self.say(format!("{verdict} {name}: {detail}"));
        self.assertions.push(DemoAssertion {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

pub fn run_demo(config: &ScenarioConfig) -> DemoReport {
    match run_demo_inner(config) {
        Ok(report) => report,
        Err((transcript, error)) => DemoReport {
            transcript: format!("{transcript}\ndemo aborted: {error}\n"),
            assertions: vec![DemoAssertion {
                name: "workflow".into(),
                passed: false,
                detail: error,
            }],
        },
    }
}

type DemoResult<T> = Result<T, String>;

fn run_demo_inner(config: &ScenarioConfig) -> Result<DemoReport, (String, String)> {
    let seed = config.seed;
    let space = AddressSpace::new(config.address_bits).map_err(|e| (String::new(), e.to_string()))?;
    let provider = static_provider(&config.provider);
    let dht_config = DhtConfig {
        replication: config.replication,
        ..DhtConfig::default()
    };
    let mut world = DemoWorld {
        space,
        provider,
        directory: Dht::new(Overlay::empty(OverlayId::Directory, space), dht_config),
        latency: LatencySampler::new(config.latency, derive_rng(seed, "demo.latency")),
        identity_rng: derive_rng(seed, "demo.identities"),
        message_rng: derive_rng(seed, "demo.messages"),
        clock: 0.0,
        sent_so_far: 0,
        transcript: String::new(),
    assertions: Vec::new(),
    };

    match script(&mut world, dht_config) {
        Ok(()) => Ok(DemoReport {
            transcript: world.transcript,
            assertions: world.assertions,
        }),
        Err(e) => Err((world.transcript, e)),
    }
}

fn script(w: &mut DemoWorld, dht_config: DhtConfig) -> DemoResult<()> {
    let _ = writeln!(
        w.transcript,
        "socialmesh demo: four peers, one directory overlay, three friendships"
    );

    // Identities and the directory overlay.
    let mut alice = make_identity(w, "Alice Smith", "alice@example.org")?;
    let mut bob = make_identity(w, "Bob Jones", "bob@example.org")?;
    let mut carol = make_identity(w, "Carol White", "carol@example.org")?;
    let mut dave = make_identity(w, "Dave Brown", "dave@example.org")?;

    let alice_node = alice.node_id(w.space);
    w.directory
        .create_genesis(alice_node)
        .map_err(|e| e.to_string())?;
    w.say("alice creates the public directory overlay");
    for (name, identity) in [("bob", &bob), ("carol", &carol), ("dave", &dave)] {
        w.directory
            .join(identity.node_id(w.space), alice_node)
            .map_err(|e| e.to_string())?;
        w.tick(None);
        w.say(format!("{name} joins the directory overlay"));
    }
    for identity in [&alice, &bob, &carol, &dave] {
        publish_directory_entry(
            &mut w.directory,
            identity.node_id(w.space),
            &identity.certificate,
            w.provider,
            w.clock,
        )
        .map_err(|e| e.to_string())?;
    }
    w.tick(None);
    w.say("all four publish their certificates under their directory keys");

    // Friendships per the social graph.
    let (alice_into_bob, bob_into_alice) = befriend(w, &mut alice, &mut bob, "alice", "bob")?;
    let (carol_into_alice, _alice_into_carol) =
        befriend(w, &mut carol, &mut alice, "carol", "alice")?;
    let (dave_into_bob, _bob_into_dave) = befriend(w, &mut dave, &mut bob, "dave", "bob")?;
    let _ = alice_into_bob; // alice never visits bob's profile in this demo

    // Alice's profile overlay: owner online, three posts.
    let mut alice_profile = ProfileNet::start(&alice, w.space, dht_config, w.provider);
    let alice_hash = alice_profile.owner_cert_hash;
    publish_active(&mut w.directory, alice_node, &alice_hash, w.clock).map_err(|e| e.to_string())?;
    w.tick(Some(&alice_profile));
    w.say("alice starts her profile overlay and lists herself as an active peer");

    let owner_m = alice_profile.owner_membership();
    let mut alice_posts = Vec::new();
    for (kind, text) in [
        (PostKind::Status, "settling into the new overlay"),
        (PostKind::Board, "board: welcome, friends"),
        (PostKind::Status, "second status update"),
    ] {
        let (hash, _) = alice_profile
            .publish_post(&owner_m, &alice, kind, text.as_bytes(), w.provider, w.clock)
            .map_err(|e| e.to_string())?;
        alice_posts.push(hash);
    }
    w.tick(Some(&alice_profile));
    w.say("alice publishes 3 posts into her profile's data store");

    // Bob and Carol join Alice's profile via the active-peer list.
    let bob_m = join_profile(w, &mut alice_profile, &bob, Some(&bob_into_alice), "bob")?;
    let carol_m = join_profile(w, &mut alice_profile, &carol, Some(&carol_into_alice), "carol")?;

    // Assertion 1: both friends read all of Alice's posts.
    let day_end = w.clock as u64 + 1;
    let (bob_view, _) = alice_profile
        .fetch_posts(&bob_m, 0, day_end, None, None, w.provider, w.clock)
        .map_err(|e| e.to_string())?;
    let (carol_view, _) = alice_profile
        .fetch_posts(&carol_m, 0, day_end, None, None, w.provider, w.clock)
        .map_err(|e| e.to_string())?;
    w.tick(Some(&alice_profile));
    let bob_sees: Vec<_> = bob_view.iter().map(|p| p.post_hash()).collect();
    let carol_sees: Vec<_> = carol_view.iter().map(|p| p.post_hash()).collect();
    let mut want = alice_posts.clone();
    want.sort();
    let ok = {
        let mut b = bob_sees.clone();
        let mut c = carol_sees.clone();
        b.sort();
        c.sort();
        b == want && c == want
    };
    w.check(
        "friends_read_posts",
        ok,
        format!(
            "bob reads {}/{} posts, carol reads {}/{}",
            bob_sees.len(),
            alice_posts.len(),
            carol_sees.len(),
            alice_posts.len()
        ),
    );

    // Bob's profile overlay; Dave joins it.
    let mut bob_profile = ProfileNet::start(&bob, w.space, dht_config, w.provider);
    let bob_hash = bob_profile.owner_cert_hash;
    publish_active(
        &mut w.directory,
        bob.node_id(w.space),
        &bob_hash,
        w.clock,
    )
    .map_err(|e| e.to_string())?;
    w.tick(Some(&bob_profile));
    w.say("bob starts his profile overlay");
    join_profile(w, &mut bob_profile, &dave, Some(&dave_into_bob), "dave")?;

    // Assertion 2: Carol holds no credential from Bob.
    let (active, _) = lookup_active(
        &mut w.directory,
        carol.node_id(w.space),
        &bob_hash,
        w.clock,
    )
    .map_err(|e| e.to_string())?;
    let attempt = bob_profile.join(&carol, None, &active, w.provider, w.clock);
    w.tick(Some(&bob_profile));
    let outcome = match &attempt {
        Ok(_) => "success".to_string(),
        Err(e) => e.to_string(),
    };
    w.check(
        "outsider_join_rejected",
        matches!(attempt, Err(ProfileError::NotAuthorized)),
        format!("carol joining bob's profile -> {outcome}"),
    );

    // Assertion 3: private message round-trip, owner-only.
    alice_profile
        .send_private_message(
            &bob_m,
            &bob,
            "lunch?",
            b"same place at noon?",
            w.provider,
            &mut w.message_rng,
            w.clock,
        )
        .map_err(|e| e.to_string())?;
    let inbox = alice_profile
        .read_private_messages(&alice, w.provider, w.clock)
        .map_err(|e| e.to_string())?;
    w.tick(Some(&alice_profile));
    let pm_ok = matches!(
        inbox.as_slice(),
        [PmReadResult::Message(m)]
            if m.sender_cert_hash == bob.cert_hash(w.provider)
                && m.subject == "lunch?"
                && m.body == b"same place at noon?"
    );
    w.check(
        "private_message_roundtrip",
        pm_ok,
        format!("alice decrypts {} message(s) from her mailbox", inbox.len()),
    );

    // Assertion 4: revocation is immediate for links and permanent for
    // rejoin attempts.
    let record = revoke_member(
        &alice,
        carol.cert_hash(w.provider),
        w.provider,
        w.clock as u64,
    );
    alice_profile
        .propagate_revocation(&alice, record, w.provider, w.clock)
        .map_err(|e| e.to_string())?;
    w.tick(Some(&alice_profile));
    w.say("alice broadcasts a revocation for carol and stores it in the DHT");
    let expelled = !alice_profile.is_online(carol_m.node_id);
    let (active, _) = lookup_active(
        &mut w.directory,
        carol.node_id(w.space),
        &alice_hash,
        w.clock,
    )
    .map_err(|e| e.to_string())?;
    let rejoin = alice_profile.join(
        &carol,
        Some(&carol_into_alice),
        &active,
        w.provider,
        w.clock,
    );
    w.tick(Some(&alice_profile));
    w.check(
        "revocation_permanent",
        expelled && matches!(rejoin, Err(ProfileError::Revoked)),
        format!(
            "carol expelled={expelled}, rejoin with stale credential -> {}",
            match &rejoin {
                Ok(_) => "success".to_string(),
                Err(e) => e.to_string(),
            }
        ),
    );

    let passed = w.assertions.iter().filter(|a| a.passed).count();
    let total = w.assertions.len();
    let _ = writeln!(w.transcript, "demo result: {passed}/{total} assertions passed");
    Ok(())
}

fn make_identity(w: &mut DemoWorld, name: &str, email: &str) -> DemoResult<Identity> {
    create_identity(
        PublicInfo::new(name, email, &[]),
        w.space,
        w.provider,
        &mut w.identity_rng,
        0,
    )
    .map_err(|e| e.to_string())
}

/// Run the whole friendship workflow between `a` (requester) and `b`
/// (receiver). Returns the credentials granting `a` access to `b`'s profile
/// overlay and vice versa.
fn befriend(
    w: &mut DemoWorld,
    a: &mut Identity,
    b: &mut Identity,
    a_name: &str,
    b_name: &str,
) -> DemoResult<(MemberCertificate, MemberCertificate)> {
    let provider = w.provider;
    let a_node = a.node_id(w.space);
    let b_node = b.node_id(w.space);
    let a_hash = a.cert_hash(provider);
    let b_hash = b.cert_hash(provider);

    // a finds b in the directory by name.
    let found = search_directory(
        &mut w.directory,
        a_node,
        &DirectoryQuery::by_name(&b.certificate.body.public_info.full_name),
        provider,
        w.clock,
    )
    .map_err(|e| e.to_string())?;
    let b_cert = found
        .iter()
        .find(|c| c.cert_hash(provider) == b_hash)
        .ok_or_else(|| format!("{a_name} could not find {b_name} in the directory"))?
        .clone();
    w.tick(None);
    w.say(format!("{a_name} finds {b_name} via directory search"));

    send_friend_request(&mut w.directory, a_node, a, &b_cert, provider, w.clock)
        .map_err(|e| e.to_string())?;
    w.tick(None);
    w.say(format!("{a_name} stores a friendship request in {b_name}'s mailbox"));

    // b comes online, checks requests, and accepts unconditionally.
    let requests = check_requests(&mut w.directory, b_node, b, provider, w.clock)
        .map_err(|e| e.to_string())?;
    let request = requests
        .iter()
        .find(|r| r.requester_cert.cert_hash(provider) == a_hash)
        .ok_or_else(|| format!("{b_name} sees no request from {a_name}"))?
        .clone();
    respond_to_request(
        &mut w.directory,
        b_node,
        b,
        &request,
        FriendshipDecision::UnconditionalAccept,
        provider,
        w.clock,
    )
    .map_err(|e| e.to_string())?;
    w.tick(None);
    w.say(format!(
        "{b_name} accepts unconditionally: signs {a_name}'s friend entry, issues a counter-request"
    ));

    // a collects the response: friend entry, membership credential, and the
    // counter-request to answer.
    let responses = check_responses(&mut w.directory, a_node, a, provider, w.clock)
        .map_err(|e| e.to_string())?;
    let response = responses
        .iter()
        .find(|r| {
            r.counter_request
                .as_ref()
                .map(|c| c.requester_cert.cert_hash(provider) == b_hash)
                .unwrap_or(false)
        })
        .ok_or_else(|| format!("{a_name} sees no response from {b_name}"))?
        .clone();
    let entry_for_a = response
        .signed_friend_entry
        .clone()
        .ok_or("unconditional accept must carry a friend entry")?;
    a.certificate.append_friend_entry(entry_for_a);
    let a_credential = response
        .member_credential
        .clone()
        .ok_or("unconditional accept must carry a membership credential")?;
    let counter = response.counter_request.clone().expect("checked above");

    // a answers the counter-request, closing the loop for b.
    respond_to_request(
        &mut w.directory,
        a_node,
        a,
        &counter,
        FriendshipDecision::UnconditionalAccept,
        provider,
        w.clock,
    )
    .map_err(|e| e.to_string())?;
    let responses = check_responses(&mut w.directory, b_node, b, provider, w.clock)
        .map_err(|e| e.to_string())?;
    let response = responses
        .iter()
        .find(|r| {
            r.counter_request
                .as_ref()
                .map(|c| c.requester_cert.cert_hash(provider) == a_hash)
                .unwrap_or(false)
        })
        .ok_or_else(|| format!("{b_name} sees no response from {a_name}"))?
        .clone();
    let entry_for_b = response
        .signed_friend_entry
        .clone()
        .ok_or("unconditional accept must carry a friend entry")?;
    b.certificate.append_friend_entry(entry_for_b);
    let b_credential = response
        .member_credential
        .clone()
        .ok_or("unconditional accept must carry a membership credential")?;
    w.tick(None);
    w.say(format!(
        "{a_name} and {b_name} exchange signed friend entries and membership credentials"
    ));
    Ok((a_credential, b_credential))
}

fn join_profile(
    w: &mut DemoWorld,
    profile: &mut ProfileNet,
    member: &Identity,
    credential: Option<&MemberCertificate>,
    member_name: &str,
) -> DemoResult<crate::profile::ProfileMembership> {
    let provider = w.provider;
    let node = member.node_id(w.space);
    let (active, _) = lookup_active(&mut w.directory, node, &profile.owner_cert_hash, w.clock)
        .map_err(|e| e.to_string())?;
    let (membership, _) = profile
        .join(member, credential, &active, provider, w.clock)
        .map_err(|e| format!("{member_name} failed to join: {e}"))?;
    publish_active(&mut w.directory, node, &profile.owner_cert_hash, w.clock)
        .map_err(|e| e.to_string())?;
    w.tick(Some(profile));
    w.say(format!(
        "{member_name} bootstraps into the profile overlay via the active-peer list"
    ));
    Ok(membership)
}
