//! `pcp` command-line tool: real and hermetic transports for the Peer Copy
//! session.

pub mod app;
pub mod exchange;
pub mod lan;
pub mod progress;
pub mod tcp;
