//! Built-in scenarios over the simulated network.
//!
//! Each scenario wires one or more sender/receiver pairs into a [`Network`],
//! runs them to completion under the virtual clock and checks the outcome it
//! is meant to demonstrate. The same runner backs `pcp simulate`, the
//! browser demo and the integration tests.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use futures::future::join_all;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{Latency, SimConfig};
use super::exec::SimError;
use super::network::{Network, TamperRule};
use crate::auth::RESPONDER_HANDSHAKE_LEN;
use crate::discovery::Capability;
use crate::net::{Host, PeerAddress};
use crate::passphrase::{generate_passphrase, Passphrase, WORDLIST_LEN};
use crate::session::{self, SendSource, SessionConfig, SessionError, SessionObserver, SessionReport, Silent};
use crate::transfer::{Decision, MemoryDestination, TransferStatus};

/// Virtual-time budget for a single scenario run.
pub const DEFAULT_LIMIT_MS: u64 = 3_600_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    HappyPath,
    Collision,
    WrongPassphrase,
    LocalVsGlobal,
    SlotBoundary,
    LateSender,
    Partition,
    Tamper,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::HappyPath,
        Scenario::Collision,
        Scenario::WrongPassphrase,
        Scenario::LocalVsGlobal,
        Scenario::SlotBoundary,
        Scenario::LateSender,
        Scenario::Partition,
        Scenario::Tamper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::HappyPath => "happy-path",
            Scenario::Collision => "collision",
            Scenario::WrongPassphrase => "wrong-passphrase",
            Scenario::LocalVsGlobal => "local-vs-global",
            Scenario::SlotBoundary => "slot-boundary",
            Scenario::LateSender => "late-sender",
            Scenario::Partition => "partition",
            Scenario::Tamper => "tamper",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Scenario::HappyPath => "one pair on a shared link transfers 1 MiB",
            Scenario::Collision => "8 pairs share a channel word; each must reach its own partner",
            Scenario::WrongPassphrase => "receiver has the last word wrong; authentication is exhausted",
            Scenario::LocalVsGlobal => "peer visible on both backends; the local path wins",
            Scenario::SlotBoundary => "receiver starts 4 minutes after the sender published",
            Scenario::LateSender => "receiver polls for 10 s before the sender publishes",
            Scenario::Partition => "link is cut after the third chunk; the receiver aborts",
            Scenario::Tamper => "one ciphertext byte is flipped in transit; the channel aborts",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = Scenario::ALL.iter().map(|k| k.name()).collect();
            format!("unknown scenario {s:?} (known: {})", names.join(", "))
        })
    }
}

/// One sender/receiver pair to run.
#[derive(Clone)]
pub struct PairSpec {
    pub sender: PeerAddress,
    pub receiver: PeerAddress,
    pub filename: String,
    pub data: Rc<[u8]>,
    pub passphrase: Passphrase,
    /// Words typed at the receiver; defaults to the sender's passphrase.
    pub receiver_words: Option<String>,
    /// Virtual delay before the sender starts.
    pub sender_delay_ms: u64,
    /// Virtual delay before the receiver starts.
    pub receiver_delay_ms: u64,
    pub decision: Decision,
    /// Receiver settings when they differ from the sender's.
    pub receiver_config: Option<SessionConfig>,
}

impl PairSpec {
    pub fn new(sender: PeerAddress, receiver: PeerAddress, passphrase: Passphrase, data: impl Into<Rc<[u8]>>) -> Self {
        PairSpec {
            sender,
            receiver,
            filename: "payload.bin".into(),
            data: data.into(),
            passphrase,
            receiver_words: None,
            sender_delay_ms: 0,
            receiver_delay_ms: 0,
            decision: Decision::Accept,
            receiver_config: None,
        }
    }
}

pub struct PairRun {
    pub spec: PairSpec,
    pub sender: Result<SessionReport, SessionError>,
    pub receiver: Result<SessionReport, SessionError>,
    pub received: MemoryDestination,
}

impl PairRun {
    /// Bytes the receiver committed, if any.
    pub fn received_bytes(&self) -> Option<Vec<u8>> {
        self.received.get(&self.spec.filename)
    }

    pub fn digest_matches(&self) -> bool {
        self.received_bytes()
            .is_some_and(|b| Sha256::digest(&b) == Sha256::digest(&self.spec.data))
    }

    pub fn completed(&self) -> bool {
        let ok = |r: &Result<SessionReport, SessionError>| r.as_ref().is_ok_and(|r| r.outcome.is_completed());
        ok(&self.sender) && ok(&self.receiver) && self.digest_matches()
    }
}

/// Observer that calls a hook with receiver progress; used for fault
/// injection at a precise point of the transfer.
struct ProgressHook<F: Fn(u64, u64)>(F);

impl<F: Fn(u64, u64)> SessionObserver for ProgressHook<F> {
    fn progress(&self, done: u64, total: u64) {
        (self.0)(done, total)
    }
}

/// Runs all pairs concurrently and waits for every session to finish.
pub fn run_pairs(
    net: &Network,
    config: &SessionConfig,
    pairs: Vec<PairSpec>,
    limit_ms: u64,
) -> Result<Vec<PairRun>, SimError> {
    run_pairs_observed(net, config, pairs, limit_ms, |_| Rc::new(Silent))
}

/// Like [`run_pairs`] with a per-pair observer on the receiving side.
pub fn run_pairs_observed(
    net: &Network,
    config: &SessionConfig,
    pairs: Vec<PairSpec>,
    limit_ms: u64,
    observer: impl Fn(usize) -> Rc<dyn SessionObserver>,
) -> Result<Vec<PairRun>, SimError> {
    let sim = net.sim().clone();
    let clock = net.clock();
    let limit = net.now_ms().saturating_add(limit_ms);
    let mut handles = Vec::new();
    for (i, spec) in pairs.iter().enumerate() {
        let mut scfg = config.clone();
        scfg.passphrase = Some(spec.passphrase.clone());
        let rcfg = spec.receiver_config.clone().unwrap_or_else(|| config.clone());

        let shost: Rc<dyn Host> = net.host(spec.sender);
        let sbackends = net.backends(spec.sender);
        let source = SendSource::Memory {
            name: spec.filename.clone(),
            data: spec.data.clone(),
        };
        let sdelay = spec.sender_delay_ms;
        let sclock = clock.clone();
        let sender = sim.spawn(async move {
            sclock.sleep_ms(sdelay).await;
            session::run_sender(&scfg, &source, shost, &sbackends, &Silent).await
        });

        let rhost: Rc<dyn Host> = net.host(spec.receiver);
        let rbackends = net.backends(spec.receiver);
        let words = spec
            .receiver_words
            .clone()
            .unwrap_or_else(|| spec.passphrase.to_string());
        let decision = spec.decision;
        let dest = MemoryDestination::new();
        let mut rdest = dest.clone();
        let rdelay = spec.receiver_delay_ms;
        let rclock = clock.clone();
        let obs = observer(i);
        let receiver = sim.spawn(async move {
            rclock.sleep_ms(rdelay).await;
            session::run_receiver(&rcfg, &words, rhost, &rbackends, &decision, &mut rdest, &*obs).await
        });
        handles.push((sender, receiver, dest));
    }
    let mut waits = Vec::new();
    let mut dests = Vec::new();
    for (s, r, d) in handles {
        waits.push(async move { (s.await, r.await) });
        dests.push(d);
    }
    let results = sim.block_on_until(join_all(waits), limit)?;
    Ok(pairs
        .into_iter()
        .zip(results)
        .zip(dests)
        .map(|((spec, (sender, receiver)), received)| PairRun {
            spec,
            sender,
            receiver,
            received,
        })
        .collect())
}

/// Deterministic random payload.
pub fn payload(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x7061_796c_6f61_6400);
    let mut v = vec![0u8; len];
    rng.fill_bytes(&mut v);
    v
}

/// `n` passphrases that share their first word and differ elsewhere.
pub fn colliding_passphrases(rng: &mut impl Rng, n: usize, word_count: usize) -> Vec<Passphrase> {
    let mut out: Vec<Passphrase> = Vec::with_capacity(n);
    let channel: u16 = rng.gen_range(0..WORDLIST_LEN as u16);
    while out.len() < n {
        let mut idx: Vec<u16> = (0..word_count).map(|_| rng.gen_range(0..WORDLIST_LEN as u16)).collect();
        idx[0] = channel;
        let p = Passphrase::from_indices(idx).expect("valid indices");
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// Replaces one word after the first with a different one.
pub fn perturb_one_word(p: &Passphrase, rng: &mut impl Rng) -> Passphrase {
    let mut idx = p.indices().to_vec();
    let pos = rng.gen_range(1..idx.len());
    let delta = rng.gen_range(1..WORDLIST_LEN as u16);
    idx[pos] = (idx[pos] + delta) % WORDLIST_LEN as u16;
    Passphrase::from_indices(idx).expect("valid indices")
}

#[derive(Debug, Clone, Serialize)]
pub struct PairSummary {
    pub sender: String,
    pub receiver: String,
    pub sender_result: String,
    pub receiver_result: String,
    pub via: Option<Capability>,
    pub bytes: u64,
    pub digest_matches: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub passed: bool,
    pub expectation: String,
    pub virtual_ms: u64,
    pub events: usize,
    pub trace_hash: String,
    pub pairs: Vec<PairSummary>,
}

fn result_label(r: &Result<SessionReport, SessionError>) -> String {
    match r {
        Ok(rep) => match rep.outcome.status {
            TransferStatus::Completed => "completed".into(),
            TransferStatus::Rejected => "rejected".into(),
            TransferStatus::Aborted => format!("aborted: {}", rep.outcome.reason.as_deref().unwrap_or("unknown")),
        },
        Err(e) => format!("failed: {e}"),
    }
}

fn summarize(net: &Network, runs: &[PairRun]) -> Vec<PairSummary> {
    runs.iter()
        .map(|r| PairSummary {
            sender: net.name_of(&r.spec.sender).unwrap_or_default(),
            receiver: net.name_of(&r.spec.receiver).unwrap_or_default(),
            sender_result: result_label(&r.sender),
            receiver_result: result_label(&r.receiver),
            via: r.receiver.as_ref().ok().and_then(|rep| rep.via),
            bytes: r.receiver.as_ref().map(|rep| rep.outcome.bytes).unwrap_or(0),
            digest_matches: r.digest_matches(),
        })
        .collect()
}

/// Builds the network for `config`, runs `scenario` and checks its
/// expectation. The network is returned so callers can inspect the trace.
pub fn run_scenario(scenario: Scenario, config: &SimConfig) -> Result<(ScenarioReport, Network), SimError> {
    let mut config = config.clone();
    if scenario == Scenario::LocalVsGlobal {
        config.local.latency_ms = Latency::fixed(5);
        config.dht.latency_ms = Latency::fixed(500);
    }
    let net = Network::new(&config);
    let link = config
        .links
        .first()
        .map(|l| l.id.clone())
        .ok_or_else(|| SimError::InvalidArgument("scenario needs at least one link".into()))?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let scfg = config.session.clone();
    let wc = scfg.word_count;
    let start = net.now_ms();
    let new_pair = |rng: &mut ChaCha20Rng, i: usize, len: usize| -> Result<PairSpec, SimError> {
        let s = net.spawn_named(&format!("sender{i}"), &[&link], false)?;
        let r = net.spawn_named(&format!("receiver{i}"), &[&link], false)?;
        let words = generate_passphrase(wc, rng).map_err(|e| SimError::InvalidArgument(e.to_string()))?;
        Ok(PairSpec::new(
            s,
            r,
            words,
            payload(config.seed.wrapping_add(i as u64), len),
        ))
    };

    let (runs, passed, expectation) = match scenario {
        Scenario::HappyPath => {
            let runs = run_pairs(&net, &scfg, vec![new_pair(&mut rng, 0, 1 << 20)?], DEFAULT_LIMIT_MS)?;
            let ok = runs[0].completed();
            (runs, ok, "transfer completes and digests match")
        }
        Scenario::Collision => {
            let words = colliding_passphrases(&mut rng, 8, wc.max(2));
            let mut pairs = Vec::new();
            for (i, w) in words.into_iter().enumerate() {
                let mut p = new_pair(&mut rng, i, 4096 + i * 1000)?;
                p.passphrase = w;
                pairs.push(p);
            }
            let runs = run_pairs(&net, &scfg, pairs, DEFAULT_LIMIT_MS)?;
            let ok = runs.iter().all(PairRun::completed) && cross_pair_manifests(&net, &runs) == 0;
            (runs, ok, "all pairs complete with their own partner")
        }
        Scenario::WrongPassphrase => {
            let mut p = new_pair(&mut rng, 0, 4096)?;
            p.receiver_words = Some(perturb_one_word(&p.passphrase, &mut rng).to_string());
            let runs = run_pairs(&net, &scfg, vec![p], DEFAULT_LIMIT_MS)?;
            let ok = matches!(runs[0].receiver, Err(SessionError::AuthExhausted)) && runs[0].received_bytes().is_none();
            (runs, ok, "receiver reports authentication exhausted, nothing written")
        }
        Scenario::LocalVsGlobal => {
            let runs = run_pairs(&net, &scfg, vec![new_pair(&mut rng, 0, 4096)?], DEFAULT_LIMIT_MS)?;
            let via = runs[0].receiver.as_ref().ok().and_then(|r| r.via);
            let ok = runs[0].completed() && via == Some(Capability::LocalNetwork);
            (runs, ok, "completes via the local backend")
        }
        Scenario::SlotBoundary => {
            let mut p = new_pair(&mut rng, 0, 4096)?;
            p.receiver_delay_ms = 240_000;
            let cfg = SessionConfig {
                republish: false,
                discovery_deadline_secs: 0,
                ..scfg.clone()
            };
            let runs = run_pairs(&net, &cfg, vec![p], DEFAULT_LIMIT_MS)?;
            let ok = runs[0].completed();
            (runs, ok, "completes through the current or previous slot query")
        }
        Scenario::LateSender => {
            let mut p = new_pair(&mut rng, 0, 4096)?;
            p.sender_delay_ms = 10_000;
            let runs = run_pairs(&net, &scfg, vec![p], DEFAULT_LIMIT_MS)?;
            let ok = runs[0].completed();
            (runs, ok, "polling discovery finds the late provider")
        }
        Scenario::Partition => {
            let p = new_pair(&mut rng, 0, 8 * 4096)?;
            let cfg = SessionConfig {
                chunk_size: 4096,
                ..scfg.clone()
            };
            let cut = net.clone();
            let cut_link = link.clone();
            let hook = move |done: u64, _total: u64| {
                if done == 3 * 4096 {
                    cut.partition(&cut_link, true).expect("link exists");
                }
            };
            let observer: Rc<dyn SessionObserver> = Rc::new(ProgressHook(hook));
            let runs = run_pairs_observed(&net, &cfg, vec![p], DEFAULT_LIMIT_MS, move |_| observer.clone())?;
            let aborted = runs[0]
                .receiver
                .as_ref()
                .is_ok_and(|r| r.outcome.status == TransferStatus::Aborted);
            let ok = aborted && runs[0].received.names().is_empty();
            (runs, ok, "receiver aborts and no file is created")
        }
        Scenario::Tamper => {
            let p = new_pair(&mut rng, 0, 16 * 1024)?;
            let offset = RESPONDER_HANDSHAKE_LEN as u64 + rng.gen_range(0..4096u64);
            net.add_tamper(TamperRule {
                from: p.sender.peer_id,
                offset,
                mask: 1 << rng.gen_range(0..8),
            });
            let runs = run_pairs(&net, &scfg, vec![p], DEFAULT_LIMIT_MS)?;
            let r = &runs[0];
            let aborted = match &r.receiver {
                Ok(rep) => rep.outcome.status == TransferStatus::Aborted,
                Err(SessionError::Transfer(_)) => true,
                Err(_) => false,
            };
            let ok = aborted && r.received.names().is_empty();
            (runs, ok, "channel aborts and no file is created")
        }
    };
    let report = ScenarioReport {
        scenario: scenario.name().into(),
        seed: config.seed,
        passed,
        expectation: expectation.into(),
        virtual_ms: net.now_ms() - start,
        events: net.trace().len(),
        trace_hash: net.trace_hash(),
        pairs: summarize(&net, &runs),
    };
    Ok((report, net))
}

/// Manifest frames sent by a pair's sender to anyone but its own receiver.
pub fn cross_pair_manifests(net: &Network, runs: &[PairRun]) -> usize {
    let mut count = 0;
    for rec in net.trace() {
        if rec.event != "transfer.manifest" {
            continue;
        }
        let Some(to) = rec.detail.strip_prefix("to=") else {
            continue;
        };
        for run in runs {
            if net.name_of(&run.spec.sender).as_deref() == Some(rec.node.as_str())
                && run.spec.receiver.peer_id.to_string() != to
            {
                count += 1;
            }
        }
    }
    count
}

/// Upper bound on a fault-free session in virtual milliseconds: discovery
/// (one query interval plus publish and lookup latency), dial and handshake
/// round trips, manifest and confirmation, then one trip per chunk.
pub fn liveness_bound_ms(config: &SimConfig, chunks: u64) -> u64 {
    let trip = config
        .links
        .iter()
        .map(|l| l.latency_ms.max_ms)
        .max()
        .unwrap_or(0)
        .max(config.global.latency_ms.max_ms * 2);
    let discovery = config.dht.latency_ms.max_ms * 2 + config.dht.query_interval_ms;
    discovery + trip * (2 + 3 + 2 + chunks + 2)
}
