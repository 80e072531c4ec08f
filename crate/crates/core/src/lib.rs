//! Peer Copy: passphrase-rendezvous, PAKE-authenticated peer-to-peer file
//! transfer.
//!
//! The sender picks a few BIP39 words. The first word selects a channel; the
//! channel and the current five-minute slot give a discovery key that both
//! sides derive independently. The sender publishes a provider record under
//! that key, the receiver looks it up, dials, and both run SPAKE2 over the
//! full word sequence before any file data moves.

pub mod auth;
pub mod discovery;
pub mod net;
pub mod passphrase;
pub mod rendezvous;
pub mod session;
pub mod simnet;
pub mod transfer;
pub mod wire;

pub use net::{Clock, Host, PeerAddress, PeerId};
pub use passphrase::{generate_passphrase, parse_passphrase, Passphrase};
