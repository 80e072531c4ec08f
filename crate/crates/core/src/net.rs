//! Transport and clock abstractions shared by the simulator and real adapters.
//!
//! Everything here is single-threaded: futures are `LocalBoxFuture` and
//! handles are `Rc`. The session code is written once against these traits.

use std::fmt;
use std::net::SocketAddr;
use std::rc::Rc;

use futures::future::LocalBoxFuture;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque 16-byte node identifier, rendered as hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PeerId(pub [u8; 16]);

impl PeerId {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut id = [0u8; 16];
        rng.fill_bytes(&mut id);
        PeerId(id)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        Some(PeerId(hex::decode(s).ok()?.try_into().ok()?))
    }

    pub fn short(&self) -> String {
        self.to_hex()[..8].to_string()
    }
}

impl fmt::Debug for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PeerId({})", self.short())
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for PeerId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PeerId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PeerId::from_hex(&s).ok_or_else(|| serde::de::Error::custom("peer id must be 32 hex chars"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    /// Node handle inside a simulated network.
    Sim(u32),
    Socket(SocketAddr),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Sim(n) => write!(f, "sim:{n}"),
            Endpoint::Socket(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PeerAddress {
    pub peer_id: PeerId,
    pub endpoint: Endpoint,
}

impl fmt::Display for PeerAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.peer_id.short(), self.endpoint)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("dial error: {0}")]
    Dial(String),
    #[error("connection dropped")]
    Dropped,
    #[error("connection closed")]
    Closed,
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("io error: {0}")]
    Io(String),
}

/// Reliable ordered duplex byte stream.
///
/// `recv` yields `Ok(None)` on orderly end-of-stream and `Err(Dropped)` when
/// the path was severed. Dropping the handle closes the stream.
pub trait ByteStream {
    fn send<'a>(&'a mut self, data: &'a [u8]) -> LocalBoxFuture<'a, Result<(), NetError>>;
    fn recv(&mut self) -> LocalBoxFuture<'_, Result<Option<Vec<u8>>, NetError>>;
    fn close(&mut self);
    fn remote(&self) -> PeerAddress;
    /// True when the stream runs through a relay hop.
    fn relayed(&self) -> bool {
        false
    }
}

pub type BoxStream = Box<dyn ByteStream>;

/// Unix time source in milliseconds with timers.
pub trait Clock {
    fn now_ms(&self) -> u64;
    fn sleep_until(&self, deadline_ms: u64) -> LocalBoxFuture<'static, ()>;
    /// Resolves once every activity scheduled for the current instant has
    /// run. On a real clock this is immediate.
    fn settle(&self) -> LocalBoxFuture<'static, ()>;

    fn now_secs(&self) -> u64 {
        self.now_ms() / 1000
    }

    fn sleep_ms(&self, ms: u64) -> LocalBoxFuture<'static, ()> {
        self.sleep_until(self.now_ms().saturating_add(ms))
    }
}

/// One structured log line: `{t, node, event, detail}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    pub node: String,
    pub event: String,
    pub detail: String,
}

/// A node's view of the network: its address, clock, dialing and accepting.
pub trait Host {
    fn address(&self) -> PeerAddress;
    fn clock(&self) -> Rc<dyn Clock>;
    fn dial(&self, to: PeerAddress) -> LocalBoxFuture<'static, Result<BoxStream, NetError>>;
    /// Next inbound connection.
    fn accept(&self) -> LocalBoxFuture<'static, Result<BoxStream, NetError>>;
    /// Refuse further inbound connections.
    fn stop_listening(&self);
    /// Fresh seed material for per-session randomness.
    fn seed(&self) -> [u8; 32];
    fn log(&self, event: &str, detail: String);
}
