//! Deterministic in-process network harness.
//!
//! A [`Network`] owns a virtual-clock executor ([`Sim`]), a topology of
//! links and nodes, reliable ordered connections with sampled latency,
//! simulated discovery backends, and an append-only event trace. Runs with
//! the same seed and the same scripted inputs produce identical traces.

mod backends;
pub mod config;
mod exec;
mod network;
pub mod scenario;

pub use backends::{SimDht, SimLocal};
pub use config::{BackendConfig, ExchangeConfig, Latency, LinkConfig, NodeConfig, SimConfig};
pub use exec::{JoinHandle, Sim, SimClock, SimError};
pub use network::{Network, SimHost, SimStream, TamperRule};
