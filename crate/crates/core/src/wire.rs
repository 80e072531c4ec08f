//! Length-prefixed frames: `version(1) ‖ type(1) ‖ length(4, BE) ‖ payload`.

use thiserror::Error;

use crate::net::{BoxStream, NetError, PeerAddress};

pub const PROTOCOL_VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 6;
/// Upper bound on a single frame payload (largest chunk plus overhead).
pub const MAX_PAYLOAD: usize = 16 * 1024 * 1024 + 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameKind {
    PakeMsg1 = 0x01,
    PakeMsg2 = 0x02,
    ConfirmTag = 0x03,
    AppData = 0x10,
}

impl TryFrom<u8> for FrameKind {
    type Error = WireError;

    fn try_from(b: u8) -> Result<Self, WireError> {
        match b {
            0x01 => Ok(FrameKind::PakeMsg1),
            0x02 => Ok(FrameKind::PakeMsg2),
            0x03 => Ok(FrameKind::ConfirmTag),
            0x10 => Ok(FrameKind::AppData),
            other => Err(WireError::UnknownKind(other)),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("protocol error: unsupported version {0:#04x}")]
    Version(u8),
    #[error("protocol error: unknown frame type {0:#04x}")]
    UnknownKind(u8),
    #[error("protocol error: frame payload of {0} bytes exceeds limit")]
    TooLarge(usize),
    #[error("protocol error: expected {expected:?} frame, got {got:?}")]
    Unexpected { expected: FrameKind, got: FrameKind },
    #[error("connection closed by peer")]
    Eof,
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: FrameKind, payload: Vec<u8>) -> Self {
        Frame { kind, payload }
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_frame(self.kind, &self.payload)
    }

    pub fn expect(self, kind: FrameKind) -> Result<Self, WireError> {
        if self.kind == kind {
            Ok(self)
        } else {
            Err(WireError::Unexpected {
                expected: kind,
                got: self.kind,
            })
        }
    }
}

pub fn encode_frame(kind: FrameKind, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.push(PROTOCOL_VERSION);
    out.push(kind as u8);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    out
}

/// Incremental decoder over an arbitrary chunking of the byte stream.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    pub fn next_frame(&mut self) -> Result<Option<Frame>, WireError> {
        if self.buf.len() < HEADER_LEN {
            return Ok(None);
        }
        if self.buf[0] != PROTOCOL_VERSION {
            return Err(WireError::Version(self.buf[0]));
        }
        let kind = FrameKind::try_from(self.buf[1])?;
        let len = u32::from_be_bytes(self.buf[2..6].try_into().expect("4 bytes")) as usize;
        if len > MAX_PAYLOAD {
            return Err(WireError::TooLarge(len));
        }
        if self.buf.len() < HEADER_LEN + len {
            return Ok(None);
        }
        let payload = self.buf[HEADER_LEN..HEADER_LEN + len].to_vec();
        self.buf.drain(..HEADER_LEN + len);
        Ok(Some(Frame { kind, payload }))
    }
}

/// A byte stream read and written in whole frames.
pub struct FramedStream {
    inner: BoxStream,
    decoder: FrameDecoder,
}

impl FramedStream {
    pub fn new(inner: BoxStream) -> Self {
        FramedStream {
            inner,
            decoder: FrameDecoder::default(),
        }
    }

    pub fn remote(&self) -> PeerAddress {
        self.inner.remote()
    }

    pub fn relayed(&self) -> bool {
        self.inner.relayed()
    }

    pub async fn write_raw(&mut self, bytes: &[u8]) -> Result<(), WireError> {
        self.inner.send(bytes).await.map_err(WireError::from)
    }

    pub async fn write_frame(&mut self, kind: FrameKind, payload: &[u8]) -> Result<(), WireError> {
        let bytes = encode_frame(kind, payload);
        self.write_raw(&bytes).await
    }

    pub async fn read_frame(&mut self) -> Result<Frame, WireError> {
        loop {
            if let Some(f) = self.decoder.next_frame()? {
                return Ok(f);
            }
            match self.inner.recv().await? {
                Some(bytes) => self.decoder.push(&bytes),
                None => return Err(WireError::Eof),
            }
        }
    }

    pub fn close(&mut self) {
        self.inner.close();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn golden_frames() {
        assert_eq!(
            encode_frame(FrameKind::PakeMsg1, b"abc"),
            vec![0x01, 0x01, 0, 0, 0, 3, b'a', b'b', b'c']
        );
        assert_eq!(encode_frame(FrameKind::PakeMsg2, &[]), vec![0x01, 0x02, 0, 0, 0, 0]);
        assert_eq!(
            encode_frame(FrameKind::ConfirmTag, &[0xff; 2]),
            vec![0x01, 0x03, 0, 0, 0, 2, 0xff, 0xff]
        );
        let big = encode_frame(FrameKind::AppData, &vec![7u8; 0x01_0203]);
        assert_eq!(&big[..6], &[0x01, 0x10, 0x00, 0x01, 0x02, 0x03]);
    }

    #[test]
    fn decoder_rejects_bad_headers() {
        let mut d = FrameDecoder::default();
        d.push(&[0x02, 0x01, 0, 0, 0, 0]);
        assert_eq!(d.next_frame(), Err(WireError::Version(2)));
        let mut d = FrameDecoder::default();
        d.push(&[0x01, 0x7f, 0, 0, 0, 0]);
        assert_eq!(d.next_frame(), Err(WireError::UnknownKind(0x7f)));
        let mut d = FrameDecoder::default();
        d.push(&[0x01, 0x10, 0xff, 0xff, 0xff, 0xff]);
        assert!(matches!(d.next_frame(), Err(WireError::TooLarge(_))));
        let mut d = FrameDecoder::default();
        d.push(&[0x01, 0x10, 0, 0]);
        assert_eq!(d.next_frame(), Ok(None));
    }

    proptest! {
        #[test]
        fn decode_any_chunking(
            payloads in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..300), 1..6),
            cuts in proptest::collection::vec(1usize..64, 1..40),
        ) {
            let kinds = [FrameKind::PakeMsg1, FrameKind::PakeMsg2, FrameKind::ConfirmTag, FrameKind::AppData];
            let frames: Vec<Frame> = payloads
                .into_iter()
                .enumerate()
                .map(|(i, p)| Frame::new(kinds[i % 4], p))
                .collect();
            let wire: Vec<u8> = frames.iter().flat_map(Frame::encode).collect();
            let mut d = FrameDecoder::default();
            let mut out = Vec::new();
            let mut pos = 0;
            let mut cut = cuts.iter().cycle();
            while pos < wire.len() {
                let n = (*cut.next().unwrap()).min(wire.len() - pos);
                d.push(&wire[pos..pos + n]);
                pos += n;
                while let Some(f) = d.next_frame().unwrap() {
                    out.push(f);
                }
            }
            prop_assert_eq!(out, frames);
            prop_assert_eq!(d.buffered(), 0);
        }
    }
}
