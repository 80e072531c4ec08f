//! Time-slotted discovery ids.
//!
//! Both peers independently compute `/pcp/{slot_start}/{channel}` from the
//! channel word and their own clock, then hash it into a 32-byte content key
//! that serves as the rendezvous point in every discovery backend.

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::passphrase::WORDLIST_LEN;

/// Slot width in seconds. Changing it breaks interoperability.
pub const SLOT_WIDTH_SECS: u64 = 300;

pub const ID_PREFIX: &str = "/pcp/";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RendezvousError {
    #[error("invalid argument: slot width must be positive")]
    ZeroWidth,
    #[error("invalid argument: slot starting at {0} has no predecessor")]
    EpochUnderflow(u64),
    #[error("invalid argument: channel {0} outside 0..2048")]
    ChannelOutOfRange(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeSlot {
    start: u64,
    width: u64,
}

impl TimeSlot {
    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn width(&self) -> u64 {
        self.width
    }

    pub fn end(&self) -> u64 {
        self.start + self.width
    }
}

/// Truncates `now` (unix seconds) to the start of its slot.
pub fn truncate_to_slot(now: u64, width: u64) -> Result<TimeSlot, RendezvousError> {
    if width == 0 {
        return Err(RendezvousError::ZeroWidth);
    }
    Ok(TimeSlot {
        start: now / width * width,
        width,
    })
}

pub fn previous_slot(slot: TimeSlot) -> Result<TimeSlot, RendezvousError> {
    if slot.start < slot.width {
        return Err(RendezvousError::EpochUnderflow(slot.start));
    }
    Ok(TimeSlot {
        start: slot.start - slot.width,
        width: slot.width,
    })
}

/// SHA-256 of a discovery id string.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentKey(pub [u8; 32]);

impl ContentKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(ContentKey(bytes.try_into().ok()?))
    }
}

impl fmt::Debug for ContentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentKey({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for ContentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscoveryKey {
    channel: u16,
    slot: TimeSlot,
    id: String,
    content_key: ContentKey,
}

impl DiscoveryKey {
    pub fn channel(&self) -> u16 {
        self.channel
    }

    pub fn slot(&self) -> TimeSlot {
        self.slot
    }

    /// The wire-visible `/pcp/{slot_start}/{channel}` string.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn content_key(&self) -> ContentKey {
        self.content_key
    }
}

pub fn discovery_key(channel: u32, slot: TimeSlot) -> Result<DiscoveryKey, RendezvousError> {
    if channel as usize >= WORDLIST_LEN {
        return Err(RendezvousError::ChannelOutOfRange(channel));
    }
    let id = format!("{ID_PREFIX}{}/{}", slot.start, channel);
    let content_key = ContentKey(Sha256::digest(id.as_bytes()).into());
    Ok(DiscoveryKey {
        channel: channel as u16,
        slot,
        id,
        content_key,
    })
}

/// Keys a receiver queries at `now`: the current slot, then the previous
/// one when it exists.
pub fn query_keys(channel: u16, now_secs: u64, width: u64) -> Result<Vec<DiscoveryKey>, RendezvousError> {
    let current = truncate_to_slot(now_secs, width)?;
    let mut keys = vec![discovery_key(channel.into(), current)?];
    if let Ok(prev) = previous_slot(current) {
        keys.push(discovery_key(channel.into(), prev)?);
    }
    Ok(keys)
}
