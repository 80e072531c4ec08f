use std::rc::Rc;

use pcp_core::discovery::Capability;
use pcp_core::net::Host;
use pcp_core::passphrase::{generate_passphrase, Passphrase};
use pcp_core::session::{self, SendSource, SessionConfig, SessionError, Silent};
use pcp_core::simnet::scenario::{self, colliding_passphrases, payload, run_pairs, PairSpec};
use pcp_core::simnet::{Latency, LinkConfig, Network, SimConfig};
use pcp_core::transfer::{Decision, MemoryDestination, NoAnswer, TransferStatus};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const LIMIT: u64 = 3_600_000;

fn words(seed: u64) -> Passphrase {
    generate_passphrase(4, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
}

fn fixed_link(id: &str, ms: u64) -> LinkConfig {
    LinkConfig {
        latency_ms: Latency::fixed(ms),
        ..LinkConfig::new(id)
    }
}

fn net_with(seed: u64, edit: impl FnOnce(&mut SimConfig)) -> (Network, SimConfig) {
    let mut cfg = SimConfig {
        seed,
        ..SimConfig::default()
    };
    edit(&mut cfg);
    (Network::new(&cfg), cfg)
}

fn pair(net: &Network, name: &str, data: Vec<u8>, seed: u64) -> PairSpec {
    let s = net.spawn_named(&format!("{name}-s"), &["lan"], false).unwrap();
    let r = net.spawn_named(&format!("{name}-r"), &["lan"], false).unwrap();
    PairSpec::new(s, r, words(seed), data)
}

fn events(net: &Network, event: &str) -> Vec<(String, String)> {
    net.trace()
        .into_iter()
        .filter(|r| r.event == event)
        .map(|r| (r.node, r.detail))
        .collect()
}

#[test]
fn happy_path_bytes_identical() {
    let (net, _) = net_with(1, |_| {});
    let data = payload(1, 300_000);
    let runs = run_pairs(
        &net,
        &SessionConfig::default(),
        vec![pair(&net, "a", data.clone(), 1)],
        LIMIT,
    )
    .unwrap();
    assert!(runs[0].completed());
    assert_eq!(runs[0].received_bytes().unwrap(), data);
    let s = runs[0].sender.as_ref().unwrap();
    let r = runs[0].receiver.as_ref().unwrap();
    assert_eq!(s.outcome.bytes, data.len() as u64);
    assert!(r.outcome.digest_verified);
    assert_eq!(r.peer, runs[0].spec.sender);
    assert_eq!(s.binding, r.binding);
}

#[test]
fn receiver_four_minutes_late_finds_previous_slot() {
    // Start mid-slot so that +240 s lands in the next slot.
    let (net, _) = net_with(2, |c| c.start_time = 1_617_283_200 + 200);
    let mut p = pair(&net, "a", payload(2, 1000), 2);
    p.receiver_delay_ms = 240_000;
    let cfg = SessionConfig {
        republish: false,
        discovery_deadline_secs: 0,
        ..SessionConfig::default()
    };
    let runs = run_pairs(&net, &cfg, vec![p], LIMIT).unwrap();
    assert!(runs[0].completed());
    assert_eq!(
        runs[0].receiver.as_ref().unwrap().binding,
        "/pcp/1617283200/".to_string() + &runs[0].spec.passphrase.channel_id().to_string()
    );
}

#[test]
fn two_colliding_pairs_complete_with_own_partner() {
    for seed in 0..5 {
        let (net, _) = net_with(seed, |_| {});
        let ws = colliding_passphrases(&mut ChaCha20Rng::seed_from_u64(seed), 2, 4);
        let mut pairs = Vec::new();
        for (i, w) in ws.into_iter().enumerate() {
            let mut p = pair(&net, &format!("p{i}"), payload(seed * 10 + i as u64, 5000 + i), 0);
            p.passphrase = w;
            pairs.push(p);
        }
        let runs = run_pairs(&net, &SessionConfig::default(), pairs, LIMIT).unwrap();
        for r in &runs {
            assert!(r.completed(), "seed {seed}");
            assert_eq!(r.receiver.as_ref().unwrap().peer, r.spec.sender);
        }
        assert_eq!(scenario::cross_pair_manifests(&net, &runs), 0);
    }
}

#[test]
fn wrong_last_word_exhausts_and_sender_keeps_listening() {
    let (net, _) = net_with(3, |_| {});
    let mut p = pair(&net, "a", payload(3, 100), 3);
    let mut idx = p.passphrase.indices().to_vec();
    idx[3] = (idx[3] + 1) % 2048;
    p.receiver_words = Some(Passphrase::from_indices(idx).unwrap().to_string());
    let cfg = SessionConfig {
        discovery_deadline_secs: 30,
        ..SessionConfig::default()
    };
    let start = net.now_ms();
    let runs = run_pairs(&net, &cfg, vec![p], LIMIT).unwrap();
    assert_eq!(runs[0].receiver.as_ref().unwrap_err(), &SessionError::AuthExhausted);
    // The sender only gives up at its own deadline, after the failed attempt.
    assert_eq!(runs[0].sender.as_ref().unwrap_err(), &SessionError::Timeout);
    let sender = net.name_of(&runs[0].spec.sender).unwrap();
    let fails: Vec<_> = net
        .trace()
        .into_iter()
        .filter(|r| r.event == "auth.fail" && r.node == sender)
        .collect();
    assert_eq!(fails.len(), 1);
    assert!(fails[0].t < start + 30_000);
    let end = net
        .trace()
        .into_iter()
        .rfind(|r| r.event == "session.end" && r.node == sender)
        .unwrap();
    assert_eq!(end.t, start + 30_000);
    assert!(runs[0].received_bytes().is_none());
}

#[test]
fn receiver_before_sender_polls_until_published() {
    let (net, _) = net_with(4, |_| {});
    let mut p = pair(&net, "a", payload(4, 2048), 4);
    p.sender_delay_ms = 10_000;
    let start = net.now_ms();
    let runs = run_pairs(&net, &SessionConfig::default(), vec![p], LIMIT).unwrap();
    assert!(runs[0].completed());
    let r = net.name_of(&runs[0].spec.receiver).unwrap();
    let queries = net
        .trace()
        .into_iter()
        .filter(|t| t.node == r && (t.event == "local.query" || t.event == "dht.lookup") && t.t < start + 10_000)
        .count();
    assert!(
        queries >= 10,
        "receiver polled {queries} times before the sender appeared"
    );
}

#[test]
fn three_candidates_losers_closed() {
    let (net, _) = net_with(5, |c| {
        c.links = vec![fixed_link("fast", 1), fixed_link("slow", 2)];
        c.local.latency_ms = Latency::fixed(3);
    });
    let w = words(5);
    let s0 = net.spawn_named("s0", &["fast"], false).unwrap();
    let s1 = net.spawn_named("s1", &["slow"], false).unwrap();
    let s2 = net.spawn_named("s2", &["slow"], false).unwrap();
    let r = net.spawn_named("r", &["fast", "slow"], false).unwrap();
    let data = payload(5, 1000);
    let cfg = SessionConfig {
        discovery_deadline_secs: 20,
        ..SessionConfig::default()
    };
    // Senders go first; the receiver finds all three in one poll.
    let sim = net.sim().clone();
    let mut senders = Vec::new();
    for s in [s0, s1, s2] {
        let host: Rc<dyn Host> = net.host(s);
        let backends = net.backends(s);
        let mut c = cfg.clone();
        c.passphrase = Some(w.clone());
        let src = SendSource::memory("f", data.clone());
        senders.push(sim.spawn(async move { session::run_sender(&c, &src, host, &backends, &Silent).await }));
    }
    let rhost: Rc<dyn Host> = net.host(r);
    let rb = net.backends(r);
    let text = w.to_string();
    let rc = cfg.clone();
    let dest = MemoryDestination::new();
    let mut d2 = dest.clone();
    let clock = net.clock();
    let recv = sim.spawn(async move {
        clock.sleep_ms(2_000).await;
        session::run_receiver(&rc, &text, rhost, &rb, &Decision::Accept, &mut d2, &Silent).await
    });
    let out = sim.block_on_until(recv, net.now_ms() + LIMIT).unwrap().unwrap();
    assert_eq!(out.peer, s0);
    assert!(out.outcome.is_completed());
    let cancel = events(&net, "session.cancel");
    assert!(
        cancel.iter().any(|(n, d)| n == "r" && d.starts_with("candidates=2")),
        "{cancel:?}"
    );
    sim.run_until(net.now_ms() + 30_000);
    // Both losing senders saw their connection end before authenticating.
    let fails = events(&net, "auth.fail");
    for loser in ["s1", "s2"] {
        assert!(fails.iter().any(|(n, _)| n == loser), "{loser} not closed: {fails:?}");
    }
    assert_eq!(events(&net, "transfer.manifest").len(), 1);
    for h in senders {
        assert!(h.is_finished());
    }
}

#[test]
fn same_tick_tie_break_by_peer_id() {
    for seed in 0..10 {
        let (net, _) = net_with(100 + seed, |c| {
            c.links = vec![fixed_link("lan", 7)];
            c.local.latency_ms = Latency::fixed(3);
            c.dht.latency_ms = Latency::fixed(400);
        });
        let w = words(seed);
        let a = net.spawn_named("a", &["lan"], false).unwrap();
        let b = net.spawn_named("b", &["lan"], false).unwrap();
        let r = net.spawn_named("r", &["lan"], false).unwrap();
        let cfg = SessionConfig {
            discovery_deadline_secs: 10,
            ..SessionConfig::default()
        };
        let sim = net.sim().clone();
        for s in [a, b] {
            let host: Rc<dyn Host> = net.host(s);
            let backends = net.backends(s);
            let mut c = cfg.clone();
            c.passphrase = Some(w.clone());
            let src = SendSource::memory("f", vec![1u8; 10]);
            drop(sim.spawn(async move { session::run_sender(&c, &src, host, &backends, &Silent).await }));
        }
        let rhost: Rc<dyn Host> = net.host(r);
        let rb = net.backends(r);
        let text = w.to_string();
        let clock = net.clock();
        let recv = sim.spawn(async move {
            clock.sleep_ms(1_000).await;
            let mut d = MemoryDestination::new();
            session::run_receiver(&cfg, &text, rhost, &rb, &Decision::Accept, &mut d, &Silent).await
        });
        let out = sim.block_on_until(recv, net.now_ms() + LIMIT).unwrap().unwrap();
        let expected = if a.peer_id < b.peer_id { a } else { b };
        assert_eq!(out.peer, expected, "seed {seed}");
        assert_eq!(events(&net, "session.tie-loser").len(), 1);
        let manifests_at_r = events(&net, "transfer.manifest-received");
        assert_eq!(manifests_at_r.len(), 1);
    }
}

#[test]
fn late_provider_never_dialed() {
    let (net, _) = net_with(6, |_| {});
    let w = words(6);
    let early = net.spawn_named("early", &["lan"], false).unwrap();
    let late = net.spawn_named("late", &["lan"], false).unwrap();
    let r = net.spawn_named("r", &["lan"], false).unwrap();
    let cfg = SessionConfig {
        discovery_deadline_secs: 60,
        ..SessionConfig::default()
    };
    let sim = net.sim().clone();
    let clock = net.clock();
    for (s, delay) in [(early, 0u64), (late, 15_000)] {
        let host: Rc<dyn Host> = net.host(s);
        let backends = net.backends(s);
        let mut c = cfg.clone();
        c.passphrase = Some(w.clone());
        let clock = clock.clone();
        drop(sim.spawn(async move {
            clock.sleep_ms(delay).await;
            let src = SendSource::memory("f", vec![2u8; 10]);
            session::run_sender(&c, &src, host, &backends, &Silent).await
        }));
    }
    let rhost: Rc<dyn Host> = net.host(r);
    let rb = net.backends(r);
    let text = w.to_string();
    let recv = sim.spawn(async move {
        let mut d = MemoryDestination::new();
        session::run_receiver(&cfg, &text, rhost, &rb, &Decision::Accept, &mut d, &Silent).await
    });
    let out = sim.block_on_until(recv, net.now_ms() + LIMIT).unwrap().unwrap();
    assert_eq!(out.peer, early);
    sim.run_until(net.now_ms() + 120_000);
    let dials = events(&net, "net.dial");
    assert!(
        dials.iter().all(|(_, d)| !d.contains(&late.peer_id.short())),
        "{dials:?}"
    );
}

#[test]
fn partition_mid_transfer_aborts_without_file() {
    let (report, net) = scenario::run_scenario(scenario::Scenario::Partition, &SimConfig::default()).unwrap();
    assert!(report.passed, "{report:?}");
    assert!(report.pairs[0].receiver_result.starts_with("aborted"));
    // The sender has nothing to learn the loss from; only the receiver can tell.
    assert!(
        report.pairs[0].sender_result.starts_with("completed") || report.pairs[0].sender_result.starts_with("aborted")
    );
    assert_eq!(events(&net, "net.partition").len(), 1);
}

#[test]
fn partition_before_discovery_is_not_found() {
    let (net, _) = net_with(7, |_| {});
    let p = pair(&net, "a", vec![1, 2, 3], 7);
    net.partition("lan", true).unwrap();
    let cfg = SessionConfig {
        discovery_deadline_secs: 20,
        ..SessionConfig::default()
    };
    let start = net.now_ms();
    let runs = run_pairs(&net, &cfg, vec![p], LIMIT).unwrap();
    assert_eq!(runs[0].receiver.as_ref().unwrap_err(), &SessionError::NotFound);
    assert_eq!(runs[0].sender.as_ref().unwrap_err(), &SessionError::Timeout);
    assert_eq!(net.now_ms(), start + 20_000);
}

#[test]
fn rejection_leaves_nothing() {
    let (net, _) = net_with(8, |_| {});
    let mut p = pair(&net, "a", payload(8, 9000), 8);
    p.decision = Decision::Reject;
    let runs = run_pairs(&net, &SessionConfig::default(), vec![p], LIMIT).unwrap();
    assert_eq!(
        runs[0].sender.as_ref().unwrap().outcome.status,
        TransferStatus::Rejected
    );
    assert_eq!(
        runs[0].receiver.as_ref().unwrap().outcome.status,
        TransferStatus::Rejected
    );
    assert!(runs[0].received.names().is_empty());
    let r = net.name_of(&runs[0].spec.receiver).unwrap();
    let app_bytes: Vec<_> = events(&net, "transfer.decision");
    assert!(app_bytes.iter().any(|(n, d)| n == &r && d == "reject"));
}

#[test]
fn unanswered_prompt_times_out_as_reject() {
    let (net, _) = net_with(9, |_| {});
    let w = words(9);
    let s = net.spawn_named("s", &["lan"], false).unwrap();
    let r = net.spawn_named("r", &["lan"], false).unwrap();
    let cfg = SessionConfig {
        decision_timeout_ms: 5_000,
        ..SessionConfig::default()
    };
    let sim = net.sim().clone();
    let host: Rc<dyn Host> = net.host(s);
    let backends = net.backends(s);
    let mut c = cfg.clone();
    c.passphrase = Some(w.clone());
    let sender = sim.spawn(async move {
        let src = SendSource::memory("f", vec![0u8; 100]);
        session::run_sender(&c, &src, host, &backends, &Silent).await
    });
    let rhost: Rc<dyn Host> = net.host(r);
    let rb = net.backends(r);
    let text = w.to_string();
    let recv = sim.spawn(async move {
        let mut d = MemoryDestination::new();
        let out = session::run_receiver(&cfg, &text, rhost, &rb, &NoAnswer, &mut d, &Silent).await;
        (out, d.names())
    });
    let (out, names) = sim.block_on_until(recv, net.now_ms() + LIMIT).unwrap();
    assert_eq!(out.unwrap().outcome.status, TransferStatus::Rejected);
    assert!(names.is_empty());
    sim.run_until(net.now_ms() + 1_000);
    assert_eq!(
        sender.try_take().unwrap().unwrap().outcome.status,
        TransferStatus::Rejected
    );
}

#[test]
fn happy_path_within_liveness_bound() {
    for seed in 0..10 {
        let (net, cfg) = net_with(seed, |_| {});
        let data = payload(seed, 200_000);
        let chunks = (data.len() as u64).div_ceil(65_536);
        let start = net.now_ms();
        let runs = run_pairs(
            &net,
            &SessionConfig::default(),
            vec![pair(&net, "a", data, seed)],
            LIMIT,
        )
        .unwrap();
        assert!(runs[0].completed());
        let elapsed = net.now_ms() - start;
        let bound = scenario::liveness_bound_ms(&cfg, chunks);
        assert!(elapsed <= bound, "seed {seed}: {elapsed} ms > {bound} ms");
    }
}

#[test]
fn edge_sizes_complete() {
    for (i, size) in [0usize, 1, 65_535, 65_536, 65_537].into_iter().enumerate() {
        let (net, _) = net_with(i as u64, |_| {});
        let runs = run_pairs(
            &net,
            &SessionConfig::default(),
            vec![pair(&net, "a", payload(i as u64, size), i as u64)],
            LIMIT,
        )
        .unwrap();
        assert!(runs[0].completed(), "size {size}");
        assert_eq!(runs[0].received_bytes().unwrap().len(), size);
    }
}

#[test]
fn local_path_preferred() {
    let (report, _) = scenario::run_scenario(scenario::Scenario::LocalVsGlobal, &SimConfig::default()).unwrap();
    assert!(report.passed);
    assert_eq!(report.pairs[0].via, Some(Capability::LocalNetwork));
}

#[test]
fn missing_file_is_io_error_before_any_network_activity() {
    let (net, _) = net_with(10, |_| {});
    let s = net.spawn_named("s", &["lan"], false).unwrap();
    let host: Rc<dyn Host> = net.host(s);
    let backends = net.backends(s);
    let src = SendSource::from_path("/definitely/not/here.bin");
    let out = net
        .sim()
        .block_on(async move { session::run_sender(&SessionConfig::default(), &src, host, &backends, &Silent).await })
        .unwrap();
    assert!(matches!(out, Err(SessionError::Io(_))));
    assert!(events(&net, "session.publish").is_empty());
}

#[test]
fn phases_are_reported_in_order() {
    use pcp_core::session::{Phase, SessionObserver};
    use std::cell::RefCell;

    #[derive(Default)]
    struct Rec(RefCell<Vec<Phase>>);
    impl SessionObserver for Rec {
        fn phase(&self, p: Phase) {
            self.0.borrow_mut().push(p);
        }
    }

    let (net, _) = net_with(11, |_| {});
    let p = pair(&net, "a", payload(11, 10), 11);
    let rec = Rc::new(Rec::default());
    let obs = rec.clone();
    scenario::run_pairs_observed(&net, &SessionConfig::default(), vec![p], LIMIT, move |_| obs.clone()).unwrap();
    let phases = rec.0.borrow().clone();
    assert_eq!(
        phases,
        vec![
            Phase::Discovering,
            Phase::Authenticating,
            Phase::AwaitingConfirmation,
            Phase::Transferring,
            Phase::Done
        ]
    );
}
