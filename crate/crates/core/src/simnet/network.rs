//! Virtual nodes, links and reliable byte-stream connections.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::future::poll_fn;
use std::rc::Rc;
use std::task::{Poll, Waker};

use futures::future::LocalBoxFuture;
use futures::FutureExt;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::config::{BackendConfig, Latency, LinkConfig, NodeConfig, SimConfig};
use super::exec::{Sim, SimError};
use crate::discovery::RecordStore;
use crate::net::{BoxStream, ByteStream, Clock, Endpoint, Host, NetError, PeerAddress, PeerId, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Route {
    Link(String),
    Global,
}

struct LinkState {
    cfg: LinkConfig,
    partitioned: bool,
    members: BTreeSet<usize>,
}

struct NodeState {
    name: String,
    addr: PeerAddress,
    links: BTreeSet<String>,
    relay: bool,
    live: bool,
    listening: bool,
    inbound: VecDeque<SimStream>,
    accept_waker: Option<Waker>,
    rng: ChaCha20Rng,
}

#[derive(Default)]
struct Half {
    chunks: VecDeque<Vec<u8>>,
    eof: bool,
    waker: Option<Waker>,
    /// Delivery time of the last scheduled chunk; keeps the stream ordered.
    last_at: u64,
    /// Bytes written toward this half so far.
    written: u64,
    reader_closed: bool,
}

struct ConnState {
    ends: [usize; 2],
    route: Route,
    relay: bool,
    /// `halves[i]` holds data travelling toward `ends[i]`.
    halves: [Half; 2],
    dropped: bool,
}

/// Flips bytes in transit: the `offset`-th byte written by `from` on any of
/// its connections is XORed with `mask`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TamperRule {
    pub from: PeerId,
    pub offset: u64,
    pub mask: u8,
}

pub(crate) struct NetState {
    rng: ChaCha20Rng,
    links: BTreeMap<String, LinkState>,
    nodes: Vec<NodeState>,
    conns: BTreeMap<u64, ConnState>,
    next_conn: u64,
    global_latency: Latency,
    pub(crate) dht_cfg: BackendConfig,
    pub(crate) local_cfg: BackendConfig,
    pub(crate) dht: RecordStore,
    pub(crate) local: BTreeMap<String, RecordStore>,
    tamper: Vec<TamperRule>,
    trace: Vec<TraceRecord>,
}

impl NetState {
    pub(crate) fn sample(&mut self, latency: Latency) -> u64 {
        if latency.max_ms <= latency.min_ms {
            latency.min_ms
        } else {
            self.rng.gen_range(latency.min_ms..=latency.max_ms)
        }
    }

    pub(crate) fn chance(&mut self, p: f64) -> bool {
        p > 0.0 && self.rng.gen_bool(p.min(1.0))
    }

    pub(crate) fn node_live(&self, node: usize) -> bool {
        self.nodes[node].live
    }

    pub(crate) fn globally_reachable(&self, node: usize) -> bool {
        self.nodes[node].links.iter().any(|l| {
            let link = &self.links[l];
            link.cfg.global && !link.partitioned
        })
    }

    /// Non-partitioned links of `node`, sorted.
    pub(crate) fn active_links(&self, node: usize) -> Vec<String> {
        self.nodes[node]
            .links
            .iter()
            .filter(|l| !self.links[*l].partitioned)
            .cloned()
            .collect()
    }

    pub(crate) fn link_loss(&self, link: &str) -> f64 {
        self.links[link].cfg.loss
    }

    fn route_between(&self, a: usize, b: usize) -> Option<Route> {
        let shared = self.nodes[a]
            .links
            .intersection(&self.nodes[b].links)
            .find(|l| !self.links[*l].partitioned);
        if let Some(l) = shared {
            return Some(Route::Link(l.clone()));
        }
        if self.globally_reachable(a) && self.globally_reachable(b) {
            return Some(Route::Global);
        }
        None
    }

    fn route_alive(&self, conn: &ConnState) -> bool {
        let [a, b] = conn.ends;
        if !self.nodes[a].live || !self.nodes[b].live {
            return false;
        }
        match &conn.route {
            Route::Link(l) => !self.links[l].partitioned,
            Route::Global => self.globally_reachable(a) && self.globally_reachable(b),
        }
    }

    fn one_way(&mut self, route: &Route, relay: bool) -> u64 {
        let lat = match route {
            Route::Link(l) => self.links[l].cfg.latency_ms,
            Route::Global => self.global_latency,
        };
        let mut d = self.sample(lat);
        if relay {
            d += self.sample(lat);
        }
        d
    }

    pub(crate) fn log(&mut self, t: u64, node: Option<usize>, event: &str, detail: String) {
        let node = node.map_or_else(|| "-".to_string(), |n| self.nodes[n].name.clone());
        self.trace.push(TraceRecord {
            t,
            node,
            event: event.to_string(),
            detail,
        });
    }

    fn drop_conn(&mut self, id: u64, t: u64, reason: &str) {
        let Some(conn) = self.conns.get_mut(&id) else { return };
        if conn.dropped {
            return;
        }
        conn.dropped = true;
        for half in &mut conn.halves {
            half.chunks.clear();
            if let Some(w) = half.waker.take() {
                w.wake();
            }
        }
        self.log(t, None, "net.drop", format!("conn={id} reason={reason}"));
    }

    fn drop_dead_conns(&mut self, t: u64, reason: &str) {
        let dead: Vec<u64> = self
            .conns
            .iter()
            .filter(|(_, c)| !c.dropped && !self.route_alive(c))
            .map(|(id, _)| *id)
            .collect();
        for id in dead {
            self.drop_conn(id, t, reason);
        }
    }
}

/// A simulated network: executor, topology, discovery stores and trace.
#[derive(Clone)]
pub struct Network {
    sim: Sim,
    pub(crate) state: Rc<RefCell<NetState>>,
}

impl Network {
    pub fn new(config: &SimConfig) -> Self {
        let sim = Sim::new(config.start_time.saturating_mul(1000));
        let mut links = BTreeMap::new();
        let mut local = BTreeMap::new();
        for l in &config.links {
            local.insert(l.id.clone(), RecordStore::new());
            links.insert(
                l.id.clone(),
                LinkState {
                    cfg: l.clone(),
                    partitioned: false,
                    members: BTreeSet::new(),
                },
            );
        }
        let state = NetState {
            rng: ChaCha20Rng::seed_from_u64(config.seed),
            links,
            nodes: Vec::new(),
            conns: BTreeMap::new(),
            next_conn: 0,
            global_latency: config.global.latency_ms,
            dht_cfg: config.dht.clone(),
            local_cfg: config.local.clone(),
            dht: RecordStore::new(),
            local,
            tamper: Vec::new(),
            trace: Vec::new(),
        };
        let net = Network {
            sim,
            state: Rc::new(RefCell::new(state)),
        };
        for n in &config.nodes {
            net.spawn_named(&n.name, &n.links, n.relay)
                .expect("configured node refers to a configured link");
        }
        net
    }

    pub fn sim(&self) -> &Sim {
        &self.sim
    }

    pub fn clock(&self) -> Rc<dyn Clock> {
        self.sim.clock()
    }

    pub fn now_ms(&self) -> u64 {
        self.sim.now_ms()
    }

    pub fn add_link(&self, cfg: LinkConfig) {
        let mut st = self.state.borrow_mut();
        st.local.entry(cfg.id.clone()).or_default();
        st.links.insert(
            cfg.id.clone(),
            LinkState {
                cfg,
                partitioned: false,
                members: BTreeSet::new(),
            },
        );
    }

    /// Joins a fresh node to `links` and returns its address.
    pub fn spawn_node<S: AsRef<str>>(&self, links: &[S]) -> Result<PeerAddress, SimError> {
        let name = format!("n{}", self.state.borrow().nodes.len());
        self.spawn_named(&name, links, false)
    }

    pub fn spawn_named<S: AsRef<str>>(&self, name: &str, links: &[S], relay: bool) -> Result<PeerAddress, SimError> {
        let now = self.now_ms();
        let mut st = self.state.borrow_mut();
        for l in links {
            if !st.links.contains_key(l.as_ref()) {
                return Err(SimError::InvalidArgument(format!("unknown link {:?}", l.as_ref())));
            }
        }
        if st.nodes.iter().any(|n| n.name == name) {
            return Err(SimError::InvalidArgument(format!("duplicate node name {name:?}")));
        }
        let index = st.nodes.len();
        let peer_id = PeerId::random(&mut st.rng);
        let mut seed = [0u8; 32];
        st.rng.fill_bytes(&mut seed);
        let addr = PeerAddress {
            peer_id,
            endpoint: Endpoint::Sim(index as u32),
        };
        let link_set: BTreeSet<String> = links.iter().map(|l| l.as_ref().to_string()).collect();
        for l in &link_set {
            st.links.get_mut(l).expect("checked").members.insert(index);
        }
        st.nodes.push(NodeState {
            name: name.to_string(),
            addr,
            links: link_set.clone(),
            relay,
            live: true,
            listening: true,
            inbound: VecDeque::new(),
            accept_waker: None,
            rng: ChaCha20Rng::from_seed(seed),
        });
        let detail = format!(
            "peer={} links={}",
            peer_id,
            link_set.into_iter().collect::<Vec<_>>().join(",")
        );
        st.log(now, Some(index), "node.spawn", detail);
        Ok(addr)
    }

    pub fn spawn_from(&self, cfg: &NodeConfig) -> Result<PeerAddress, SimError> {
        self.spawn_named(&cfg.name, &cfg.links, cfg.relay)
    }

    pub(crate) fn index_of(&self, addr: &PeerAddress) -> Option<usize> {
        let st = self.state.borrow();
        match addr.endpoint {
            Endpoint::Sim(i) => st
                .nodes
                .get(i as usize)
                .filter(|n| n.addr.peer_id == addr.peer_id)
                .map(|_| i as usize),
            Endpoint::Socket(_) => None,
        }
    }

    pub fn node_named(&self, name: &str) -> Option<PeerAddress> {
        self.state
            .borrow()
            .nodes
            .iter()
            .find(|n| n.name == name)
            .map(|n| n.addr)
    }

    pub fn name_of(&self, addr: &PeerAddress) -> Option<String> {
        let i = self.index_of(addr)?;
        Some(self.state.borrow().nodes[i].name.clone())
    }

    pub fn host(&self, addr: PeerAddress) -> Rc<SimHost> {
        let node = self.index_of(&addr).expect("address belongs to this network");
        Rc::new(SimHost {
            net: self.clone(),
            node,
            addr,
        })
    }

    /// Severs (`on = true`) or heals a link. In-flight data on severed paths
    /// is lost and affected connections fail on both ends.
    pub fn partition(&self, link: &str, on: bool) -> Result<(), SimError> {
        let now = self.now_ms();
        let mut st = self.state.borrow_mut();
        let Some(l) = st.links.get_mut(link) else {
            return Err(SimError::InvalidArgument(format!("unknown link {link:?}")));
        };
        l.partitioned = on;
        st.log(now, None, "net.partition", format!("link={link} on={on}"));
        if on {
            st.drop_dead_conns(now, "partition");
        }
        Ok(())
    }

    /// Stops a node: its connections fail and its local adverts vanish.
    pub fn stop_node(&self, addr: &PeerAddress) {
        let Some(i) = self.index_of(addr) else { return };
        let now = self.now_ms();
        let mut st = self.state.borrow_mut();
        st.nodes[i].live = false;
        st.nodes[i].listening = false;
        st.nodes[i].inbound.clear();
        if let Some(w) = st.nodes[i].accept_waker.take() {
            w.wake();
        }
        let peer = st.nodes[i].addr.peer_id;
        for store in st.local.values_mut() {
            let keys: Vec<_> = store_keys(store);
            for k in keys {
                store.remove_provider(&k, &peer);
            }
        }
        st.log(now, Some(i), "node.stop", String::new());
        st.drop_dead_conns(now, "node-stopped");
    }

    pub fn add_tamper(&self, rule: TamperRule) {
        self.state.borrow_mut().tamper.push(rule);
    }

    /// Bytes each node has written so far, summed over its connections.
    pub fn bytes_written_by(&self, addr: &PeerAddress) -> u64 {
        let Some(i) = self.index_of(addr) else { return 0 };
        let st = self.state.borrow();
        st.conns
            .values()
            .map(|c| {
                if c.ends[0] == i {
                    c.halves[1].written
                } else if c.ends[1] == i {
                    c.halves[0].written
                } else {
                    0
                }
            })
            .sum()
    }

    pub fn log(&self, node: Option<&PeerAddress>, event: &str, detail: String) {
        let idx = node.and_then(|a| self.index_of(a));
        let now = self.now_ms();
        self.state.borrow_mut().log(now, idx, event, detail);
    }

    pub fn trace(&self) -> Vec<TraceRecord> {
        self.state.borrow().trace.clone()
    }

    /// Line-delimited JSON trace.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.state.borrow().trace {
            out.push_str(&serde_json::to_string(r).expect("trace record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn trace_hash(&self) -> String {
        hex::encode(Sha256::digest(self.trace_jsonl().as_bytes()))
    }

    /// Opens a connection from `from` to `to`. Takes one round trip.
    pub fn dial(&self, from: PeerAddress, to: PeerAddress) -> LocalBoxFuture<'static, Result<BoxStream, NetError>> {
        let net = self.clone();
        async move {
            let a = net
                .index_of(&from)
                .ok_or_else(|| NetError::Dial("unknown local node".into()))?;
            let b = net
                .index_of(&to)
                .ok_or_else(|| NetError::Dial(format!("unknown peer {to}")))?;
            let clock = net.clock();
            let (route, relay, d) = {
                let mut st = net.state.borrow_mut();
                if !st.nodes[a].live {
                    return Err(NetError::Dial("local node stopped".into()));
                }
                let route = st.route_between(a, b);
                let now = clock.now_ms();
                let Some(route) = route else {
                    st.log(
                        now,
                        Some(a),
                        "net.dial-fail",
                        format!("to={} reason=unreachable", to.peer_id.short()),
                    );
                    return Err(NetError::Dial(format!("{to} unreachable")));
                };
                let relay = route == Route::Global && (st.nodes[a].relay || st.nodes[b].relay);
                let d = st.one_way(&route, relay);
                st.log(
                    now,
                    Some(a),
                    "net.dial",
                    format!("to={} route={:?} relay={relay}", to.peer_id.short(), route),
                );
                (route, relay, d)
            };
            clock.sleep_ms(d).await;
            let accepted = {
                let mut st = net.state.borrow_mut();
                let now = clock.now_ms();
                let ok = st.nodes[b].live && st.nodes[b].listening && st.route_between(a, b).is_some();
                if ok {
                    let id = st.next_conn;
                    st.next_conn += 1;
                    let mut halves: [Half; 2] = Default::default();
                    halves[0].last_at = now;
                    halves[1].last_at = now;
                    st.conns.insert(
                        id,
                        ConnState {
                            ends: [a, b],
                            route: route.clone(),
                            relay,
                            halves,
                            dropped: false,
                        },
                    );
                    let server = SimStream {
                        net: net.clone(),
                        conn: id,
                        side: 1,
                        remote: from,
                        relay,
                        closed: false,
                    };
                    st.nodes[b].inbound.push_back(server);
                    if let Some(w) = st.nodes[b].accept_waker.take() {
                        w.wake();
                    }
                    st.log(
                        now,
                        Some(b),
                        "net.accept",
                        format!("conn={id} from={}", from.peer_id.short()),
                    );
                    Some(id)
                } else {
                    st.log(now, Some(b), "net.refuse", format!("from={}", from.peer_id.short()));
                    None
                }
            };
            // Built before the return trip so that abandoning the dial
            // closes the connection the remote already accepted.
            let client = accepted.map(|id| SimStream {
                net: net.clone(),
                conn: id,
                side: 0,
                remote: to,
                relay,
                closed: false,
            });
            clock.sleep_ms(d).await;
            match client {
                Some(stream) => {
                    if net.state.borrow().conns[&stream.conn].dropped {
                        return Err(NetError::Dial("connection lost during setup".into()));
                    }
                    Ok(Box::new(stream) as BoxStream)
                }
                None => Err(NetError::Dial(format!("{to} refused connection"))),
            }
        }
        .boxed_local()
    }
}

fn store_keys(store: &RecordStore) -> Vec<crate::rendezvous::ContentKey> {
    store.keys()
}

/// One end of a simulated connection.
pub struct SimStream {
    net: Network,
    conn: u64,
    side: usize,
    remote: PeerAddress,
    relay: bool,
    closed: bool,
}

impl SimStream {
    pub fn conn_id(&self) -> u64 {
        self.conn
    }
}

impl ByteStream for SimStream {
    fn send<'a>(&'a mut self, data: &'a [u8]) -> LocalBoxFuture<'a, Result<(), NetError>> {
        let result = (|| {
            if self.closed {
                return Err(NetError::Closed);
            }
            let now = self.net.now_ms();
            let mut st = self.net.state.borrow_mut();
            let st = &mut *st;
            let conn = st.conns.get(&self.conn).expect("connection exists");
            if conn.dropped {
                return Err(NetError::Dropped);
            }
            let to = 1 - self.side;
            if conn.halves[to].reader_closed {
                return Err(NetError::Closed);
            }
            let from_node = conn.ends[self.side];
            let route = conn.route.clone();
            let relay = conn.relay;
            let d = st.one_way(&route, relay);
            let from_peer = st.nodes[from_node].addr.peer_id;
            let conn = st.conns.get_mut(&self.conn).expect("connection exists");
            let half = &mut conn.halves[to];
            let start = half.written;
            let mut chunk = data.to_vec();
            for rule in st.tamper.iter().filter(|r| r.from == from_peer) {
                if rule.offset >= start && rule.offset < start + chunk.len() as u64 {
                    chunk[(rule.offset - start) as usize] ^= rule.mask;
                }
            }
            half.written += chunk.len() as u64;
            let at = (now + d).max(half.last_at);
            half.last_at = at;
            let detail = format!("conn={} bytes={}", self.conn, chunk.len());
            st.log(now, Some(from_node), "net.send", detail);
            let state = self.net.state.clone();
            let id = self.conn;
            self.net.sim().schedule_at(at, move || {
                let mut st = state.borrow_mut();
                let Some(conn) = st.conns.get_mut(&id) else { return };
                if conn.dropped || conn.halves[to].reader_closed {
                    return;
                }
                conn.halves[to].chunks.push_back(chunk);
                if let Some(w) = conn.halves[to].waker.take() {
                    w.wake();
                }
            });
            Ok(())
        })();
        futures::future::ready(result).boxed_local()
    }

    fn recv(&mut self) -> LocalBoxFuture<'_, Result<Option<Vec<u8>>, NetError>> {
        let state = self.net.state.clone();
        let id = self.conn;
        let side = self.side;
        poll_fn(move |cx| {
            let mut st = state.borrow_mut();
            let conn = st.conns.get_mut(&id).expect("connection exists");
            if conn.dropped {
                return Poll::Ready(Err(NetError::Dropped));
            }
            let half = &mut conn.halves[side];
            if let Some(c) = half.chunks.pop_front() {
                return Poll::Ready(Ok(Some(c)));
            }
            if half.eof {
                return Poll::Ready(Ok(None));
            }
            half.waker = Some(cx.waker().clone());
            Poll::Pending
        })
        .boxed_local()
    }

    fn close(&mut self) {
        if self.closed {
            return;
        }
        self.closed = true;
        let now = self.net.now_ms();
        let mut st = self.net.state.borrow_mut();
        let st = &mut *st;
        let Some(conn) = st.conns.get(&self.conn) else { return };
        if conn.dropped {
            return;
        }
        let route = conn.route.clone();
        let relay = conn.relay;
        let node = conn.ends[self.side];
        let d = st.one_way(&route, relay);
        let conn = st.conns.get_mut(&self.conn).expect("connection exists");
        conn.halves[self.side].reader_closed = true;
        conn.halves[self.side].chunks.clear();
        let to = 1 - self.side;
        let at = (now + d).max(conn.halves[to].last_at);
        conn.halves[to].last_at = at;
        st.log(now, Some(node), "net.close", format!("conn={}", self.conn));
        let state = self.net.state.clone();
        let id = self.conn;
        self.net.sim().schedule_at(at, move || {
            let mut st = state.borrow_mut();
            let Some(conn) = st.conns.get_mut(&id) else { return };
            conn.halves[to].eof = true;
            if let Some(w) = conn.halves[to].waker.take() {
                w.wake();
            }
        });
    }

    fn remote(&self) -> PeerAddress {
        self.remote
    }

    fn relayed(&self) -> bool {
        self.relay
    }
}

impl Drop for SimStream {
    fn drop(&mut self) {
        self.close();
    }
}

/// A node's [`Host`] view of the simulated network.
pub struct SimHost {
    net: Network,
    node: usize,
    addr: PeerAddress,
}

impl SimHost {
    pub fn network(&self) -> &Network {
        &self.net
    }
}

impl Host for SimHost {
    fn address(&self) -> PeerAddress {
        self.addr
    }

    fn clock(&self) -> Rc<dyn Clock> {
        self.net.clock()
    }

    fn dial(&self, to: PeerAddress) -> LocalBoxFuture<'static, Result<BoxStream, NetError>> {
        self.net.dial(self.addr, to)
    }

    fn accept(&self) -> LocalBoxFuture<'static, Result<BoxStream, NetError>> {
        let state = self.net.state.clone();
        let node = self.node;
        poll_fn(move |cx| {
            let mut st = state.borrow_mut();
            let n = &mut st.nodes[node];
            if !n.live || !n.listening {
                return Poll::Ready(Err(NetError::Unavailable("not listening".into())));
            }
            if let Some(s) = n.inbound.pop_front() {
                return Poll::Ready(Ok(Box::new(s) as BoxStream));
            }
            n.accept_waker = Some(cx.waker().clone());
            Poll::Pending
        })
        .boxed_local()
    }

    fn stop_listening(&self) {
        let pending: Vec<SimStream> = {
            let mut st = self.net.state.borrow_mut();
            let n = &mut st.nodes[self.node];
            n.listening = false;
            if let Some(w) = n.accept_waker.take() {
                w.wake();
            }
            n.inbound.drain(..).collect()
        };
        drop(pending);
    }

    fn seed(&self) -> [u8; 32] {
        let mut seed = [0u8; 32];
        self.net.state.borrow_mut().nodes[self.node].rng.fill_bytes(&mut seed);
        seed
    }

    fn log(&self, event: &str, detail: String) {
        let now = self.net.now_ms();
        self.net.state.borrow_mut().log(now, Some(self.node), event, detail);
    }
}
