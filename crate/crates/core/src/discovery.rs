//! Provider-record discovery with pluggable backends.
//!
//! Two backend families exist: global (the DHT analogue, visible from every
//! link) and local-network (the mDNS analogue, scoped to one link). Lookups
//! poll the backend until a deadline so a receiver that starts before the
//! sender has published still finds it.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::rc::Rc;

use futures::future::LocalBoxFuture;
use futures::stream::{self, LocalBoxStream, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{Clock, PeerAddress, PeerId};
use crate::rendezvous::ContentKey;

/// Provider records live for at most a day.
pub const DEFAULT_TTL_SECS: u64 = 86_400;

pub const DEFAULT_QUERY_INTERVAL_MS: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Capability {
    Global,
    LocalNetwork,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiscoveryError {
    #[error("unavailable: discovery backend stopped")]
    Unavailable,
    #[error("invalid argument: backend lacks {0:?} capability")]
    Capability(Capability),
    #[error("backend error: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderRecord {
    pub content_key: String,
    pub provider: PeerAddress,
    /// Unix milliseconds.
    pub published_at: u64,
    pub ttl_secs: u64,
}

impl ProviderRecord {
    pub fn new(key: ContentKey, provider: PeerAddress, published_at: u64, ttl_secs: u64) -> Self {
        Self {
            content_key: key.to_hex(),
            provider,
            published_at,
            ttl_secs,
        }
    }

    pub fn expires_at(&self) -> u64 {
        self.published_at.saturating_add(self.ttl_secs.saturating_mul(1000))
    }

    pub fn is_live(&self, now_ms: u64) -> bool {
        self.expires_at() > now_ms
    }
}

/// In-memory record set keyed by content key, one record per provider.
#[derive(Debug, Default, Clone)]
pub struct RecordStore {
    records: BTreeMap<ContentKey, BTreeMap<PeerId, ProviderRecord>>,
}

impl RecordStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or refreshes the provider's record under `key`.
    pub fn put(&mut self, key: ContentKey, record: ProviderRecord) {
        self.records
            .entry(key)
            .or_default()
            .insert(record.provider.peer_id, record);
    }

    pub fn remove_provider(&mut self, key: &ContentKey, peer: &PeerId) {
        if let Some(set) = self.records.get_mut(key) {
            set.remove(peer);
        }
    }

    /// Live providers ordered by publication time, then peer id.
    pub fn live(&mut self, key: &ContentKey, now_ms: u64) -> Vec<PeerAddress> {
        let Some(set) = self.records.get_mut(key) else {
            return Vec::new();
        };
        set.retain(|_, r| r.is_live(now_ms));
        let mut live: Vec<&ProviderRecord> = set.values().collect();
        live.sort_by_key(|r| (r.published_at, r.provider.peer_id));
        live.into_iter().map(|r| r.provider).collect()
    }

    pub fn keys(&self) -> Vec<ContentKey> {
        self.records.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.records.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub type ProviderStream = LocalBoxStream<'static, Result<PeerAddress, DiscoveryError>>;

/// A discovery backend as seen from one node.
///
/// `publish`/`lookup` are single round trips; the free functions below add
/// capability checks and polling.
pub trait DiscoveryBackend {
    fn capability(&self) -> Capability;
    fn name(&self) -> &str;
    fn clock(&self) -> Rc<dyn Clock>;
    fn query_interval_ms(&self) -> u64 {
        DEFAULT_QUERY_INTERVAL_MS
    }
    fn publish(
        &self,
        key: ContentKey,
        me: PeerAddress,
        ttl_secs: u64,
    ) -> LocalBoxFuture<'static, Result<(), DiscoveryError>>;
    fn lookup(&self, key: ContentKey) -> LocalBoxFuture<'static, Result<Vec<PeerAddress>, DiscoveryError>>;
}

fn require(backend: &dyn DiscoveryBackend, cap: Capability) -> Result<(), DiscoveryError> {
    if backend.capability() == cap {
        Ok(())
    } else {
        Err(DiscoveryError::Capability(cap))
    }
}

/// Stores a provider record in a global backend. Re-providing refreshes it.
pub async fn provide(
    backend: &dyn DiscoveryBackend,
    key: ContentKey,
    me: PeerAddress,
    ttl_secs: u64,
) -> Result<(), DiscoveryError> {
    require(backend, Capability::Global)?;
    backend.publish(key, me, ttl_secs).await
}

pub fn find_providers(backend: Rc<dyn DiscoveryBackend>, key: ContentKey, deadline_ms: u64) -> ProviderStream {
    if let Err(e) = require(&*backend, Capability::Global) {
        return stream::once(async move { Err(e) }).boxed_local();
    }
    poll_providers(backend, key, deadline_ms)
}

pub async fn local_advertise(
    backend: &dyn DiscoveryBackend,
    key: ContentKey,
    me: PeerAddress,
) -> Result<(), DiscoveryError> {
    require(backend, Capability::LocalNetwork)?;
    backend.publish(key, me, DEFAULT_TTL_SECS).await
}

pub fn local_query(backend: Rc<dyn DiscoveryBackend>, key: ContentKey, deadline_ms: u64) -> ProviderStream {
    if let Err(e) = require(&*backend, Capability::LocalNetwork) {
        return stream::once(async move { Err(e) }).boxed_local();
    }
    poll_providers(backend, key, deadline_ms)
}

/// Publishes through whichever operation fits the backend's capability.
pub async fn announce(
    backend: &dyn DiscoveryBackend,
    key: ContentKey,
    me: PeerAddress,
    ttl_secs: u64,
) -> Result<(), DiscoveryError> {
    match backend.capability() {
        Capability::Global => provide(backend, key, me, ttl_secs).await,
        Capability::LocalNetwork => local_advertise(backend, key, me).await,
    }
}

/// Queries through whichever operation fits the backend's capability.
pub fn search(backend: Rc<dyn DiscoveryBackend>, key: ContentKey, deadline_ms: u64) -> ProviderStream {
    match backend.capability() {
        Capability::Global => find_providers(backend, key, deadline_ms),
        Capability::LocalNetwork => local_query(backend, key, deadline_ms),
    }
}

struct PollState {
    backend: Rc<dyn DiscoveryBackend>,
    key: ContentKey,
    deadline: u64,
    next_poll: u64,
    seen: HashSet<PeerId>,
    pending: VecDeque<PeerAddress>,
    failed: bool,
}

/// Repeats `lookup` every query interval until the deadline, yielding each
/// distinct provider once. A lookup that would finish after the deadline is
/// discarded.
fn poll_providers(backend: Rc<dyn DiscoveryBackend>, key: ContentKey, deadline_ms: u64) -> ProviderStream {
    let clock = backend.clock();
    let state = PollState {
        next_poll: clock.now_ms(),
        backend,
        key,
        deadline: deadline_ms,
        seen: HashSet::new(),
        pending: VecDeque::new(),
        failed: false,
    };
    stream::unfold(state, move |mut st| {
        let clock = clock.clone();
        async move {
            loop {
                if let Some(addr) = st.pending.pop_front() {
                    return Some((Ok(addr), st));
                }
                if st.failed || st.next_poll >= st.deadline {
                    return None;
                }
                if clock.now_ms() < st.next_poll {
                    clock.sleep_until(st.next_poll).await;
                }
                let interval = st.backend.query_interval_ms().max(1);
                st.next_poll = clock.now_ms() + interval;
                let lookup = st.backend.lookup(st.key);
                let deadline = clock.sleep_until(st.deadline);
                futures::pin_mut!(lookup);
                match futures::future::select(lookup, deadline).await {
                    futures::future::Either::Left((Ok(found), _)) => {
                        for addr in found {
                            if st.seen.insert(addr.peer_id) {
                                st.pending.push_back(addr);
                            }
                        }
                    }
                    futures::future::Either::Left((Err(e), _)) => {
                        st.failed = true;
                        return Some((Err(e), st));
                    }
                    futures::future::Either::Right(_) => return None,
                }
            }
        }
    })
    .boxed_local()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Endpoint;

    fn addr(n: u8) -> PeerAddress {
        PeerAddress {
            peer_id: PeerId([n; 16]),
            endpoint: Endpoint::Sim(n as u32),
        }
    }

    fn key(n: u8) -> ContentKey {
        ContentKey([n; 32])
    }

    #[test]
    fn store_put_refresh_and_expiry() {
        let mut store = RecordStore::new();
        store.put(key(1), ProviderRecord::new(key(1), addr(1), 0, 1));
        assert_eq!(store.live(&key(1), 999), vec![addr(1)]);
        assert!(store.live(&key(1), 1000).is_empty());
        // expired record pruned; re-provide brings it back
        store.put(key(1), ProviderRecord::new(key(1), addr(1), 5000, 1));
        assert_eq!(store.live(&key(1), 5500), vec![addr(1)]);
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn store_set_semantics() {
        let mut store = RecordStore::new();
        store.put(key(1), ProviderRecord::new(key(1), addr(3), 10, 60));
        store.put(key(1), ProviderRecord::new(key(1), addr(2), 20, 60));
        store.put(key(1), ProviderRecord::new(key(1), addr(3), 30, 60));
        let live = store.live(&key(1), 40);
        assert_eq!(live, vec![addr(2), addr(3)]);
        assert!(store.live(&key(2), 40).is_empty());
        store.remove_provider(&key(1), &addr(2).peer_id);
        assert_eq!(store.live(&key(1), 40), vec![addr(3)]);
    }

    #[test]
    fn ttl_boundary() {
        let r = ProviderRecord::new(key(0), addr(0), 1_000, DEFAULT_TTL_SECS);
        assert!(r.is_live(1_000 + 86_399_999));
        assert!(!r.is_live(1_000 + 86_400_000));
    }
}
