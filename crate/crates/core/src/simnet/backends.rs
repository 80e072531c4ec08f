//! Simulated discovery backends: a shared DHT-style record store and
//! per-link local advertisement (the mDNS analogue).

use std::rc::Rc;

use futures::future::LocalBoxFuture;
use futures::FutureExt;

use super::network::Network;
use crate::discovery::{Capability, DiscoveryBackend, DiscoveryError, ProviderRecord};
use crate::net::{Clock, PeerAddress};
use crate::rendezvous::ContentKey;

/// Global record store reached with per-operation latency. Lost operations
/// are retried on publish and come back empty on lookup.
pub struct SimDht {
    net: Network,
    node: usize,
}

/// Link-scoped advertisements; only nodes sharing a live link see them.
pub struct SimLocal {
    net: Network,
    node: usize,
}

impl Network {
    pub fn dht(&self, addr: PeerAddress) -> Rc<SimDht> {
        let node = self.index_of(&addr).expect("address belongs to this network");
        Rc::new(SimDht {
            net: self.clone(),
            node,
        })
    }

    pub fn local(&self, addr: PeerAddress) -> Rc<SimLocal> {
        let node = self.index_of(&addr).expect("address belongs to this network");
        Rc::new(SimLocal {
            net: self.clone(),
            node,
        })
    }

    /// Both backends for `addr`, local first.
    pub fn backends(&self, addr: PeerAddress) -> Vec<Rc<dyn DiscoveryBackend>> {
        vec![self.local(addr), self.dht(addr)]
    }
}

impl DiscoveryBackend for SimDht {
    fn capability(&self) -> Capability {
        Capability::Global
    }

    fn name(&self) -> &str {
        "dht"
    }

    fn clock(&self) -> Rc<dyn Clock> {
        self.net.clock()
    }

    fn query_interval_ms(&self) -> u64 {
        self.net.state.borrow().dht_cfg.query_interval_ms
    }

    fn publish(
        &self,
        key: ContentKey,
        me: PeerAddress,
        ttl_secs: u64,
    ) -> LocalBoxFuture<'static, Result<(), DiscoveryError>> {
        let net = self.net.clone();
        let node = self.node;
        async move {
            let clock = net.clock();
            loop {
                let (d, lost) = {
                    let mut st = net.state.borrow_mut();
                    if !st.node_live(node) {
                        return Err(DiscoveryError::Unavailable);
                    }
                    let cfg = st.dht_cfg.clone();
                    (st.sample(cfg.latency_ms), st.chance(cfg.loss))
                };
                clock.sleep_ms(d).await;
                let now = clock.now_ms();
                let mut st = net.state.borrow_mut();
                if !st.node_live(node) {
                    return Err(DiscoveryError::Unavailable);
                }
                if !st.globally_reachable(node) {
                    st.log(
                        now,
                        Some(node),
                        "dht.provide-fail",
                        format!("key={}", &key.to_hex()[..16]),
                    );
                    return Err(DiscoveryError::Backend("no route to DHT".into()));
                }
                if lost {
                    st.log(
                        now,
                        Some(node),
                        "dht.provide-lost",
                        format!("key={}", &key.to_hex()[..16]),
                    );
                    continue;
                }
                st.dht.put(key, ProviderRecord::new(key, me, now, ttl_secs));
                st.log(
                    now,
                    Some(node),
                    "dht.provide",
                    format!("key={} ttl={ttl_secs}", &key.to_hex()[..16]),
                );
                return Ok(());
            }
        }
        .boxed_local()
    }

    fn lookup(&self, key: ContentKey) -> LocalBoxFuture<'static, Result<Vec<PeerAddress>, DiscoveryError>> {
        let net = self.net.clone();
        let node = self.node;
        async move {
            let clock = net.clock();
            let (d, lost) = {
                let mut st = net.state.borrow_mut();
                if !st.node_live(node) {
                    return Err(DiscoveryError::Unavailable);
                }
                let cfg = st.dht_cfg.clone();
                (st.sample(cfg.latency_ms), st.chance(cfg.loss))
            };
            clock.sleep_ms(d).await;
            let now = clock.now_ms();
            let mut st = net.state.borrow_mut();
            if !st.node_live(node) {
                return Err(DiscoveryError::Unavailable);
            }
            let found = if lost || !st.globally_reachable(node) {
                Vec::new()
            } else {
                st.dht.live(&key, now)
            };
            st.log(
                now,
                Some(node),
                "dht.lookup",
                format!("key={} found={}", &key.to_hex()[..16], found.len()),
            );
            Ok(found)
        }
        .boxed_local()
    }
}

impl DiscoveryBackend for SimLocal {
    fn capability(&self) -> Capability {
        Capability::LocalNetwork
    }

    fn name(&self) -> &str {
        "local"
    }

    fn clock(&self) -> Rc<dyn Clock> {
        self.net.clock()
    }

    fn query_interval_ms(&self) -> u64 {
        self.net.state.borrow().local_cfg.query_interval_ms
    }

    fn publish(
        &self,
        key: ContentKey,
        me: PeerAddress,
        ttl_secs: u64,
    ) -> LocalBoxFuture<'static, Result<(), DiscoveryError>> {
        let net = self.net.clone();
        let node = self.node;
        async move {
            let clock = net.clock();
            let d = {
                let mut st = net.state.borrow_mut();
                if !st.node_live(node) {
                    return Err(DiscoveryError::Unavailable);
                }
                let lat = st.local_cfg.latency_ms;
                st.sample(lat)
            };
            clock.sleep_ms(d).await;
            let now = clock.now_ms();
            let mut st = net.state.borrow_mut();
            if !st.node_live(node) {
                return Err(DiscoveryError::Unavailable);
            }
            let links = st.active_links(node);
            for link in &links {
                let rec = ProviderRecord::new(key, me, now, ttl_secs);
                st.local.get_mut(link).expect("link store exists").put(key, rec);
            }
            st.log(
                now,
                Some(node),
                "local.advertise",
                format!("key={} links={}", &key.to_hex()[..16], links.join(",")),
            );
            Ok(())
        }
        .boxed_local()
    }

    fn lookup(&self, key: ContentKey) -> LocalBoxFuture<'static, Result<Vec<PeerAddress>, DiscoveryError>> {
        let net = self.net.clone();
        let node = self.node;
        async move {
            let clock = net.clock();
            let d = {
                let mut st = net.state.borrow_mut();
                if !st.node_live(node) {
                    return Err(DiscoveryError::Unavailable);
                }
                let lat = st.local_cfg.latency_ms;
                st.sample(lat)
            };
            clock.sleep_ms(d).await;
            let now = clock.now_ms();
            let mut st = net.state.borrow_mut();
            if !st.node_live(node) {
                return Err(DiscoveryError::Unavailable);
            }
            let mut found: Vec<PeerAddress> = Vec::new();
            for link in st.active_links(node) {
                let loss = st.link_loss(&link);
                if st.chance(loss) {
                    continue;
                }
                let live = st.local.get_mut(&link).expect("link store exists").live(&key, now);
                for a in live {
                    if !found.contains(&a) {
                        found.push(a);
                    }
                }
            }
            st.log(
                now,
                Some(node),
                "local.query",
                format!("key={} found={}", &key.to_hex()[..16], found.len()),
            );
            Ok(found)
        }
        .boxed_local()
    }
}
