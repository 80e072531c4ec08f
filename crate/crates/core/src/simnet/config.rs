//! Declarative scenario configuration (TOML).

use serde::{Deserialize, Serialize};

use crate::discovery::{DEFAULT_QUERY_INTERVAL_MS, DEFAULT_TTL_SECS};
use crate::session::SessionConfig;

/// Uniform integer latency in milliseconds, written `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u64; 2]", into = "[u64; 2]")]
pub struct Latency {
    pub min_ms: u64,
    pub max_ms: u64,
}

impl Latency {
    pub const fn fixed(ms: u64) -> Self {
        Latency { min_ms: ms, max_ms: ms }
    }

    pub const fn uniform(min_ms: u64, max_ms: u64) -> Self {
        Latency { min_ms, max_ms }
    }
}

impl From<[u64; 2]> for Latency {
    fn from([a, b]: [u64; 2]) -> Self {
        Latency {
            min_ms: a.min(b),
            max_ms: a.max(b),
        }
    }
}

impl From<Latency> for [u64; 2] {
    fn from(l: Latency) -> Self {
        [l.min_ms, l.max_ms]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub latency_ms: Latency,
    pub query_interval_ms: u64,
    /// Probability that a single discovery operation is lost.
    pub loss: f64,
    pub ttl_secs: u64,
}

impl BackendConfig {
    pub fn dht_default() -> Self {
        BackendConfig {
            latency_ms: Latency::uniform(200, 800),
            query_interval_ms: DEFAULT_QUERY_INTERVAL_MS,
            loss: 0.0,
            ttl_secs: DEFAULT_TTL_SECS,
        }
    }

    pub fn local_default() -> Self {
        BackendConfig {
            latency_ms: Latency::uniform(2, 10),
            query_interval_ms: 1_000,
            loss: 0.0,
            ttl_secs: DEFAULT_TTL_SECS,
        }
    }
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self::dht_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub id: String,
    #[serde(default = "default_link_latency")]
    pub latency_ms: Latency,
    /// Loss probability for local discovery traffic on this link.
    #[serde(default)]
    pub loss: f64,
    /// Whether the link has an uplink to the wider network (DHT and global
    /// dialing).
    #[serde(default = "default_true")]
    pub global: bool,
}

fn default_link_latency() -> Latency {
    Latency::uniform(1, 5)
}

fn default_true() -> bool {
    true
}

impl LinkConfig {
    pub fn new(id: &str) -> Self {
        LinkConfig {
            id: id.to_string(),
            latency_ms: default_link_latency(),
            loss: 0.0,
            global: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub name: String,
    pub links: Vec<String>,
    /// Global connections to or from this node go through a relay hop.
    #[serde(default)]
    pub relay: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    /// One-way latency of routed (non-link) connections.
    pub latency_ms: Latency,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            latency_ms: Latency::uniform(20, 80),
        }
    }
}

/// Cross-process rendezvous used by `send`/`receive --sim-config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExchangeConfig {
    pub dir: std::path::PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    /// Unix seconds at which the virtual clock starts.
    pub start_time: u64,
    pub global: GlobalConfig,
    pub dht: BackendConfig,
    pub local: BackendConfig,
    pub links: Vec<LinkConfig>,
    pub nodes: Vec<NodeConfig>,
    pub session: SessionConfig,
    pub exchange: Option<ExchangeConfig>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            start_time: 1_617_283_473,
            global: GlobalConfig::default(),
            dht: BackendConfig::dht_default(),
            local: BackendConfig::local_default(),
            links: vec![LinkConfig::new("lan")],
            nodes: Vec::new(),
            session: SessionConfig::default(),
            exchange: None,
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
