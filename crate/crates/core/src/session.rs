//! Sender and receiver lifecycles.
//!
//! Sender: publish the discovery key on every backend, accept connections,
//! authenticate each one, hand the first confirmed channel to the transfer.
//! Receiver: query every backend for the current and previous slot, dial
//! providers as they appear, and keep the first channel that confirms.
//! Candidates that confirm at the same virtual instant are ordered by peer
//! id; everything else is cancelled.

use std::cell::RefCell;
use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{self, Cursor, Read};
use std::path::{Path, PathBuf};
use std::rc::Rc;

use futures::future::LocalBoxFuture;
use futures::stream::{FuturesUnordered, LocalBoxStream, SelectAll};
use futures::{select_biased, FutureExt, StreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::{self, AuthError, PakeSecret, SecureChannel};
use crate::discovery::{self, Capability, DiscoveryBackend, DiscoveryError, DEFAULT_TTL_SECS};
use crate::net::{BoxStream, Clock, Host, NetError, PeerAddress, PeerId};
use crate::passphrase::{generate_passphrase, parse_passphrase, Passphrase, PassphraseError, DEFAULT_WORD_COUNT};
use crate::rendezvous::{self, DiscoveryKey, RendezvousError, SLOT_WIDTH_SECS};
use crate::transfer::{
    self, Decision, DecisionSource, Destination, TransferError, TransferManifest, TransferOutcome, DEFAULT_CHUNK_SIZE,
    DEFAULT_DECISION_TIMEOUT_MS,
};
use crate::wire::FramedStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub word_count: usize,
    pub slot_width_secs: u64,
    /// Give up discovering after this many seconds; 0 means never.
    pub discovery_deadline_secs: u64,
    /// Re-publish under each new slot while still discovering.
    pub republish: bool,
    pub handshake_timeout_ms: u64,
    pub decision_timeout_ms: u64,
    pub chunk_size: u32,
    pub ttl_secs: u64,
    /// Use these words instead of generating fresh ones (sender only).
    #[serde(skip)]
    pub passphrase: Option<Passphrase>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            word_count: DEFAULT_WORD_COUNT,
            slot_width_secs: SLOT_WIDTH_SECS,
            discovery_deadline_secs: 120,
            republish: true,
            handshake_timeout_ms: 30_000,
            decision_timeout_ms: DEFAULT_DECISION_TIMEOUT_MS,
            chunk_size: DEFAULT_CHUNK_SIZE,
            ttl_secs: DEFAULT_TTL_SECS,
            passphrase: None,
        }
    }
}

impl SessionConfig {
    fn deadline_from(&self, start_ms: u64) -> u64 {
        match self.discovery_deadline_secs {
            0 => u64::MAX,
            s => start_ms.saturating_add(s.saturating_mul(1000)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Discovering,
    Authenticating,
    AwaitingConfirmation,
    Transferring,
    Done,
    Failed,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Discovering => "discovering",
            Phase::Authenticating => "authenticating",
            Phase::AwaitingConfirmation => "awaiting-confirmation",
            Phase::Transferring => "transferring",
            Phase::Done => "done",
            Phase::Failed => "failed",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error("timed out: no peer confirmed before the discovery deadline")]
    Timeout,
    #[error("not found: no provider discovered before the deadline")]
    NotFound,
    #[error("authentication exhausted: no discovered peer knew the passphrase")]
    AuthExhausted,
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Passphrase(#[from] PassphraseError),
    #[error(transparent)]
    Rendezvous(#[from] RendezvousError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error("no discovery backend configured")]
    NoBackends,
}

/// Hooks for user-facing output. All methods default to no-ops.
pub trait SessionObserver {
    fn passphrase(&self, _words: &Passphrase) {}
    fn phase(&self, _phase: Phase) {}
    fn manifest(&self, _manifest: &TransferManifest) {}
    fn progress(&self, _done: u64, _total: u64) {}
}

pub struct Silent;

impl SessionObserver for Silent {}

/// What the sender transmits.
#[derive(Debug, Clone)]
pub enum SendSource {
    Path(PathBuf),
    Memory { name: String, data: Rc<[u8]> },
}

impl SendSource {
    pub fn memory(name: &str, data: impl Into<Rc<[u8]>>) -> Self {
        SendSource::Memory {
            name: name.to_string(),
            data: data.into(),
        }
    }

    fn name(&self) -> io::Result<String> {
        match self {
            SendSource::Path(p) => p
                .file_name()
                .and_then(|n| n.to_str())
                .map(str::to_string)
                .ok_or_else(|| {
                    io::Error::new(io::ErrorKind::InvalidInput, format!("{} has no file name", p.display()))
                }),
            SendSource::Memory { name, .. } => Ok(name.clone()),
        }
    }

    fn open(&self) -> io::Result<Box<dyn Read>> {
        match self {
            SendSource::Path(p) => {
                if p.is_dir() {
                    return Err(io::Error::new(io::ErrorKind::InvalidInput, "is a directory"));
                }
                Ok(Box::new(io::BufReader::new(fs::File::open(p)?)))
            }
            SendSource::Memory { data, .. } => Ok(Box::new(Cursor::new(data.clone()))),
        }
    }

    fn describe(&self) -> String {
        match self {
            SendSource::Path(p) => p.display().to_string(),
            SendSource::Memory { name, .. } => name.clone(),
        }
    }

    pub fn from_path(p: impl AsRef<Path>) -> Self {
        SendSource::Path(p.as_ref().to_path_buf())
    }
}

#[derive(Debug, Clone)]
pub struct SessionReport {
    pub outcome: TransferOutcome,
    pub peer: PeerAddress,
    /// Backend that found the peer (receiver side).
    pub via: Option<Capability>,
    pub binding: String,
    pub passphrase: Option<Passphrase>,
    pub manifest: Option<TransferManifest>,
}

type Confirmed = (SecureChannel, String);

struct CandidateResult {
    peer: PeerAddress,
    via: Option<Capability>,
    result: Result<Confirmed, AuthError>,
}

type Candidate = LocalBoxFuture<'static, CandidateResult>;
type Found = (Result<PeerAddress, DiscoveryError>, String, Capability);

/// Phase machine plus every concurrent activity a session owns.
pub struct SessionState {
    phase: Phase,
    candidates: FuturesUnordered<Candidate>,
    discovery: Option<SelectAll<LocalBoxStream<'static, Found>>>,
    attempted: HashSet<PeerId>,
    failures: usize,
    host: Rc<dyn Host>,
    observer_phase: Vec<Phase>,
}

impl SessionState {
    fn new(host: Rc<dyn Host>) -> Self {
        SessionState {
            phase: Phase::Discovering,
            candidates: FuturesUnordered::new(),
            discovery: None,
            attempted: HashSet::new(),
            failures: 0,
            host,
            observer_phase: vec![Phase::Discovering],
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Moves forward along the phase order; `Failed` is reachable from any
    /// phase, and nothing leaves a terminal phase.
    fn advance(&mut self, to: Phase, observer: &dyn SessionObserver) {
        if to == self.phase {
            return;
        }
        let terminal = matches!(self.phase, Phase::Done | Phase::Failed);
        assert!(
            !terminal && (to == Phase::Failed || to > self.phase),
            "illegal phase transition {} -> {}",
            self.phase,
            to
        );
        self.phase = to;
        self.observer_phase.push(to);
        self.host.log("session.phase", to.to_string());
        observer.phase(to);
    }

    pub fn active_candidates(&self) -> usize {
        self.candidates.len()
    }

    /// Closes every pending candidate connection and stops discovery. No
    /// further dials happen after this.
    pub fn cancel_losers(&mut self) {
        let n = self.candidates.len();
        self.candidates = FuturesUnordered::new();
        let streams = self.discovery.take().is_some();
        self.host
            .log("session.cancel", format!("candidates={n} discovery_stopped={streams}"));
    }
}

fn seeded_rng(host: &dyn Host) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(host.seed())
}

/// Waits for everything else scheduled at the current instant and returns
/// the best of the channels that confirmed at that instant.
async fn settle_winner(
    first: CandidateResult,
    state: &mut SessionState,
    clock: &dyn Clock,
) -> (PeerAddress, Option<Capability>, Confirmed) {
    let at = clock.now_ms();
    let mut confirmed = vec![first];
    let settle = clock.settle().fuse();
    futures::pin_mut!(settle);
    loop {
        select_biased! {
            r = state.candidates.select_next_some() => {
                match &r.result {
                    Ok(_) if clock.now_ms() == at => confirmed.push(r),
                    Ok(_) => state.host.log("auth.late", format!("peer={}", r.peer.peer_id)),
                    Err(e) => {
                        state.failures += 1;
                        state.host.log("auth.fail", format!("peer={} reason={e}", r.peer.peer_id));
                    }
                }
            }
            _ = settle => break,
        }
    }
    confirmed.sort_by_key(|c| c.peer.peer_id);
    let mut iter = confirmed.into_iter();
    let best = iter.next().expect("at least one confirmed");
    for loser in iter {
        state
            .host
            .log("session.tie-loser", format!("peer={}", loser.peer.peer_id));
    }
    let chan = best.result.expect("confirmed");
    (best.peer, best.via, chan)
}

async fn publish_all(
    backends: Vec<Rc<dyn DiscoveryBackend>>,
    key: DiscoveryKey,
    me: PeerAddress,
    ttl: u64,
    host: Rc<dyn Host>,
) {
    let jobs = backends.iter().map(|b| {
        let b = b.clone();
        let host = host.clone();
        let key = key.clone();
        async move {
            match discovery::announce(&*b, key.content_key(), me, ttl).await {
                Ok(()) => host.log("session.published", format!("backend={} id={}", b.name(), key.id())),
                Err(e) => host.log(
                    "session.publish-fail",
                    format!("backend={} id={} error={e}", b.name(), key.id()),
                ),
            }
        }
    });
    futures::future::join_all(jobs).await;
}

/// Runs the sending side to completion.
pub async fn run_sender(
    config: &SessionConfig,
    source: &SendSource,
    host: Rc<dyn Host>,
    backends: &[Rc<dyn DiscoveryBackend>],
    observer: &dyn SessionObserver,
) -> Result<SessionReport, SessionError> {
    if backends.is_empty() {
        return Err(SessionError::NoBackends);
    }
    let clock = host.clock();
    let start = clock.now_ms();
    let deadline = config.deadline_from(start);
    let mut rng = seeded_rng(&*host);
    let io_err = |e: io::Error| SessionError::Io(format!("{}: {e}", source.describe()));

    let name = source.name().map_err(io_err)?;
    let manifest = {
        let mut reader = source.open().map_err(io_err)?;
        TransferManifest::from_reader(&name, &mut reader, config.chunk_size).map_err(|e| match e {
            TransferError::Io(m) => SessionError::Io(format!("{}: {m}", source.describe())),
            other => other.into(),
        })?
    };

    let words = match &config.passphrase {
        Some(p) => p.clone(),
        None => generate_passphrase(config.word_count, &mut rng)?,
    };
    observer.passphrase(&words);
    let secret: Rc<[u8]> = words.secret_bytes().into();
    let channel = words.channel_id();

    let mut state = SessionState::new(host.clone());
    host.log(
        "session.start",
        format!("role=sender channel={channel} file={name} size={}", manifest.size()),
    );
    observer.phase(Phase::Discovering);

    let bindings: Rc<RefCell<Vec<String>>> = Rc::default();
    let me = host.address();
    let mut publishes = FuturesUnordered::new();
    let publish = |now_ms: u64,
                   bindings: &Rc<RefCell<Vec<String>>>|
     -> Result<(LocalBoxFuture<'static, ()>, u64), SessionError> {
        let slot = rendezvous::truncate_to_slot(now_ms / 1000, config.slot_width_secs)?;
        let key = rendezvous::discovery_key(channel.into(), slot)?;
        bindings.borrow_mut().push(key.id().to_string());
        host.log("session.publish", format!("id={} key={}", key.id(), key.content_key()));
        let fut = publish_all(backends.to_vec(), key, me, config.ttl_secs, host.clone()).boxed_local();
        Ok((fut, slot.end() * 1000))
    };
    let (first, mut next_slot_ms) = publish(start, &bindings)?;
    publishes.push(first);

    let mut accept = host.accept().fuse();
    let mut rollover = if config.republish {
        clock.sleep_until(next_slot_ms).fuse()
    } else {
        futures::future::Fuse::terminated()
    };
    let deadline_timer = clock.sleep_until(deadline).fuse();
    futures::pin_mut!(deadline_timer);

    let winner = loop {
        select_biased! {
            r = state.candidates.select_next_some() => {
                match r.result {
                    Ok(_) => {
                        host.log("auth.ok", format!("peer={}", r.peer.peer_id));
                        break settle_winner(r, &mut state, &*clock).await;
                    }
                    Err(e) => {
                        state.failures += 1;
                        host.log("auth.fail", format!("peer={} reason={e}", r.peer.peer_id));
                    }
                }
            }
            conn = accept => {
                match conn {
                    Ok(stream) => {
                        accept = host.accept().fuse();
                        state.advance(Phase::Authenticating, observer);
                        let peer = stream.remote();
                        host.log("session.inbound", format!("peer={}", peer.peer_id));
                        let c = responder_candidate(
                            stream,
                            secret.clone(),
                            bindings.clone(),
                            rng.gen(),
                            clock.clone(),
                            clock.now_ms().saturating_add(config.handshake_timeout_ms),
                        );
                        state.candidates.push(c);
                    }
                    Err(e) => host.log("session.listen-stopped", e.to_string()),
                }
            }
            _ = publishes.select_next_some() => {}
            _ = rollover => {
                let (fut, next) = publish(clock.now_ms(), &bindings)?;
                publishes.push(fut);
                next_slot_ms = next;
                rollover = clock.sleep_until(next_slot_ms).fuse();
            }
            _ = deadline_timer => {
                state.advance(Phase::Failed, observer);
                host.stop_listening();
                host.log("session.end", "error=timeout".into());
                return Err(SessionError::Timeout);
            }
        }
    };
    drop(accept);
    drop(publishes);
    host.stop_listening();
    state.cancel_losers();

    let (peer, _, (mut chan, binding)) = winner;
    host.log("session.winner", format!("peer={} binding={binding}", peer.peer_id));
    state.advance(Phase::AwaitingConfirmation, observer);

    host.log("transfer.manifest", format!("to={}", peer.peer_id));
    let decision = match transfer::send_manifest(&mut chan, &manifest).await {
        Ok(d) => d,
        Err(e) => {
            state.advance(Phase::Failed, observer);
            host.log("session.end", format!("error={e}"));
            return Err(e.into());
        }
    };
    host.log("transfer.decision", format!("{decision:?}").to_lowercase());
    let outcome = match decision {
        Decision::Reject => {
            chan.close();
            TransferOutcome::rejected()
        }
        Decision::Accept => {
            state.advance(Phase::Transferring, observer);
            let mut reader = source.open().map_err(io_err)?;
            let mut progress = |done, total| observer.progress(done, total);
            let out = transfer::stream_file(&mut chan, &mut reader, &manifest, &mut progress).await;
            chan.close();
            out
        }
    };
    finish(&mut state, observer, &outcome);
    Ok(SessionReport {
        outcome,
        peer,
        via: None,
        binding,
        passphrase: Some(words),
        manifest: Some(manifest),
    })
}

fn finish(state: &mut SessionState, observer: &dyn SessionObserver, outcome: &TransferOutcome) {
    let phase = if outcome.is_completed() {
        Phase::Done
    } else {
        Phase::Failed
    };
    state.advance(phase, observer);
    state.host.log(
        "session.end",
        format!(
            "status={:?} bytes={} verified={}",
            outcome.status, outcome.bytes, outcome.digest_verified
        )
        .to_lowercase(),
    );
}

fn responder_candidate(
    stream: BoxStream,
    secret: Rc<[u8]>,
    bindings: Rc<RefCell<Vec<String>>>,
    seed: [u8; 32],
    clock: Rc<dyn Clock>,
    deadline: u64,
) -> Candidate {
    async move {
        let peer = stream.remote();
        let mut rng = ChaCha20Rng::from_seed(seed);
        let bindings = bindings.borrow().clone();
        let result = auth::authenticate_responder(
            FramedStream::new(stream),
            &secret,
            &bindings,
            &mut rng,
            &*clock,
            deadline,
        )
        .await;
        CandidateResult {
            peer,
            via: None,
            result,
        }
    }
    .boxed_local()
}

fn initiator_candidate(
    host: Rc<dyn Host>,
    peer: PeerAddress,
    via: Capability,
    secret: PakeSecret,
    seed: [u8; 32],
    timeout_ms: u64,
) -> Candidate {
    async move {
        let clock = host.clock();
        let deadline = clock.now_ms().saturating_add(timeout_ms);
        let dial = host.dial(peer);
        let timer = clock.sleep_until(deadline);
        let stream = match futures::future::select(dial, timer).await {
            futures::future::Either::Left((Ok(s), _)) => s,
            futures::future::Either::Left((Err(e), _)) => {
                return CandidateResult {
                    peer,
                    via: Some(via),
                    result: Err(AuthError::Wire(e.into())),
                }
            }
            futures::future::Either::Right(_) => {
                return CandidateResult {
                    peer,
                    via: Some(via),
                    result: Err(AuthError::Wire(NetError::Dial("dial timed out".into()).into())),
                }
            }
        };
        let mut rng = ChaCha20Rng::from_seed(seed);
        let binding = secret.session_binding.clone();
        let result = auth::authenticate_initiator(FramedStream::new(stream), &secret, &mut rng, &*clock, deadline)
            .await
            .map(|c| (c, binding));
        CandidateResult {
            peer,
            via: Some(via),
            result,
        }
    }
    .boxed_local()
}

/// Runs the receiving side to completion.
#[allow(clippy::too_many_arguments)]
pub async fn run_receiver(
    config: &SessionConfig,
    words: &str,
    host: Rc<dyn Host>,
    backends: &[Rc<dyn DiscoveryBackend>],
    decision: &dyn DecisionSource,
    dest: &mut dyn Destination,
    observer: &dyn SessionObserver,
) -> Result<SessionReport, SessionError> {
    if backends.is_empty() {
        return Err(SessionError::NoBackends);
    }
    let words = parse_passphrase(words)?;
    let clock = host.clock();
    let start = clock.now_ms();
    let deadline = config.deadline_from(start);
    let mut rng = seeded_rng(&*host);
    let channel = words.channel_id();
    let keys = rendezvous::query_keys(channel, start / 1000, config.slot_width_secs)?;

    let mut state = SessionState::new(host.clone());
    host.log(
        "session.start",
        format!(
            "role=receiver channel={channel} ids={}",
            keys.iter().map(|k| k.id()).collect::<Vec<_>>().join(",")
        ),
    );
    observer.phase(Phase::Discovering);

    let mut streams = SelectAll::new();
    for backend in backends {
        for key in &keys {
            let id = key.id().to_string();
            let cap = backend.capability();
            host.log("session.query", format!("backend={} id={id}", backend.name()));
            let s = discovery::search(backend.clone(), key.content_key(), deadline)
                .map(move |r| (r, id.clone(), cap))
                .boxed_local();
            streams.push(s);
        }
    }
    state.discovery = Some(streams);
    let me = host.address();
    let mut found_any = false;
    let deadline_timer = clock.sleep_until(deadline).fuse();
    futures::pin_mut!(deadline_timer);

    let winner = loop {
        let discovery_done = state.discovery.as_ref().is_none_or(|s| s.is_empty());
        if discovery_done && state.candidates.is_empty() {
            break None;
        }
        let next_found = async {
            match state.discovery.as_mut() {
                Some(s) if !s.is_empty() => s.next().await,
                _ => futures::future::pending().await,
            }
        };
        select_biased! {
            r = state.candidates.select_next_some() => {
                match r.result {
                    Ok(_) => {
                        host.log("auth.ok", format!("peer={}", r.peer.peer_id));
                        break Some(settle_winner(r, &mut state, &*clock).await);
                    }
                    Err(e) => {
                        state.failures += 1;
                        host.log("auth.fail", format!("peer={} reason={e}", r.peer.peer_id));
                    }
                }
            }
            found = next_found.fuse() => {
                match found {
                    Some((Ok(addr), binding, cap)) => {
                        if addr.peer_id == me.peer_id || !state.attempted.insert(addr.peer_id) {
                            continue;
                        }
                        found_any = true;
                        state.advance(Phase::Authenticating, observer);
                        host.log(
                            "session.found",
                            format!("peer={} via={cap:?} binding={binding}", addr.peer_id).to_lowercase(),
                        );
                        let secret = PakeSecret::new(words.secret_bytes(), binding);
                        state.candidates.push(initiator_candidate(
                            host.clone(),
                            addr,
                            cap,
                            secret,
                            rng.gen(),
                            config.handshake_timeout_ms,
                        ));
                    }
                    Some((Err(e), binding, cap)) => {
                        host.log("session.query-error", format!("via={cap:?} id={binding} error={e}"));
                    }
                    None => {
                        state.discovery = None;
                    }
                }
            }
            _ = deadline_timer => break None,
        }
    };

    let Some((peer, via, (mut chan, binding))) = winner else {
        state.cancel_losers();
        state.advance(Phase::Failed, observer);
        let err = if found_any {
            SessionError::AuthExhausted
        } else {
            SessionError::NotFound
        };
        host.log("session.end", format!("error={err}"));
        return Err(err);
    };
    state.cancel_losers();
    host.log(
        "session.winner",
        format!("peer={} via={:?} binding={binding}", peer.peer_id, via).to_lowercase(),
    );
    state.advance(Phase::AwaitingConfirmation, observer);

    let manifest = match transfer::recv_manifest(&mut chan).await {
        Ok(m) => m,
        Err(e) => {
            state.advance(Phase::Failed, observer);
            host.log("session.end", format!("error={e}"));
            return Err(e.into());
        }
    };
    host.log(
        "transfer.manifest-received",
        format!(
            "from={} name={} size={}",
            peer.peer_id,
            manifest.filename(),
            manifest.size()
        ),
    );
    observer.manifest(&manifest);
    let answer =
        transfer::await_confirmation(&mut chan, &manifest, decision, &*clock, config.decision_timeout_ms).await?;
    host.log("transfer.decision", format!("{answer:?}").to_lowercase());
    let outcome = match answer {
        Decision::Reject => {
            chan.close();
            TransferOutcome::rejected()
        }
        Decision::Accept => {
            state.advance(Phase::Transferring, observer);
            let mut progress = |done, total| observer.progress(done, total);
            transfer::receive_file(&mut chan, &manifest, dest, &mut progress).await
        }
    };
    finish(&mut state, observer, &outcome);
    Ok(SessionReport {
        outcome,
        peer,
        via,
        binding,
        passphrase: None,
        manifest: Some(manifest),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_match_protocol_constants() {
        let c = SessionConfig::default();
        assert_eq!(c.word_count, 4);
        assert_eq!(c.slot_width_secs, 300);
        assert_eq!(c.discovery_deadline_secs, 120);
        assert_eq!(c.ttl_secs, 86_400);
        assert_eq!(c.decision_timeout_ms, 60_000);
        assert_eq!(c.chunk_size, 65_536);
        assert_eq!(c.deadline_from(1_000), 121_000);
        let unlimited = SessionConfig {
            discovery_deadline_secs: 0,
            ..c
        };
        assert_eq!(unlimited.deadline_from(1_000), u64::MAX);
    }

    #[test]
    fn phase_order() {
        assert!(Phase::Discovering < Phase::Authenticating);
        assert!(Phase::Authenticating < Phase::AwaitingConfirmation);
        assert!(Phase::AwaitingConfirmation < Phase::Transferring);
        assert!(Phase::Transferring < Phase::Done);
        assert_eq!(Phase::AwaitingConfirmation.to_string(), "awaiting-confirmation");
    }
}
