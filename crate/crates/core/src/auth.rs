//! Password-authenticated key exchange, key confirmation and the encrypted
//! channel.
//!
//! Handshake (dialer = initiator, listener = responder):
//!
//! ```text
//! I -> R  0x01  binding_len(2) ‖ binding ‖ spake2_msg_a
//! R -> I  0x02  spake2_msg_b
//! R -> I  0x03  HMAC(k_confirm, "confirm/responder" ‖ transcript)
//! I -> R  0x03  HMAC(k_confirm, "confirm/initiator" ‖ transcript)
//! ```
//!
//! Each side sends its own tag before checking the peer's, so a password
//! mismatch is detected independently on both ends. The binding is the
//! discovery id the initiator found the responder under; it is mixed into
//! the SPAKE2 identities.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha2::Sha256;
use spake2::{Ed25519Group, Identity, Password, Spake2};
use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::net::{Clock, PeerAddress};
use crate::wire::{encode_frame, Frame, FrameKind, FramedStream, WireError, HEADER_LEN};

type HmacSha256 = Hmac<Sha256>;

pub const LABEL_SEND_INITIATOR: &[u8] = b"pcp/send/initiator";
pub const LABEL_SEND_RESPONDER: &[u8] = b"pcp/send/responder";
pub const LABEL_CONFIRM: &[u8] = b"pcp/confirm";
pub const CONFIRM_INITIATOR: &[u8] = b"confirm/initiator";
pub const CONFIRM_RESPONDER: &[u8] = b"confirm/responder";
const DATA_INITIATOR: &[u8] = b"pcp/data/initiator";
const DATA_RESPONDER: &[u8] = b"pcp/data/responder";
const HKDF_SALT: &[u8] = b"pcp/v1";

/// SPAKE2 message length for the Ed25519 group (side byte + point).
pub const SPAKE2_MSG_LEN: usize = 33;
pub const TAG_LEN: usize = 32;
pub const AEAD_TAG_LEN: usize = 16;
/// Longest accepted session binding.
pub const MAX_BINDING_LEN: usize = 256;

/// Bytes the responder writes during the handshake: msg2 plus its tag.
pub const RESPONDER_HANDSHAKE_LEN: usize = 2 * HEADER_LEN + SPAKE2_MSG_LEN + TAG_LEN;

/// Bytes the initiator writes during the handshake for a given binding.
pub fn initiator_handshake_len(binding: &str) -> usize {
    2 * HEADER_LEN + 2 + binding.len() + SPAKE2_MSG_LEN + TAG_LEN
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Initiator,
    Responder,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("handshake timed out")]
    Timeout,
    #[error("authentication failure: peer did not derive the same key")]
    AuthenticationFailure,
    #[error("decrypt error: frame failed authentication")]
    Decrypt,
    #[error("channel exhausted: nonce counter overflow")]
    Exhausted,
    #[error("channel aborted")]
    Aborted,
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Password input shared by both peers.
#[derive(Clone)]
pub struct PakeSecret {
    pub passphrase: Vec<u8>,
    pub session_binding: String,
}

impl PakeSecret {
    pub fn new(passphrase: impl Into<Vec<u8>>, session_binding: impl Into<String>) -> Self {
        PakeSecret {
            passphrase: passphrase.into(),
            session_binding: session_binding.into(),
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct SessionKeys {
    pub k_send: [u8; 32],
    pub k_recv: [u8; 32],
    pub k_confirm: [u8; 32],
    pub role: Role,
}

impl std::fmt::Debug for SessionKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionKeys")
            .field("role", &self.role)
            .finish_non_exhaustive()
    }
}

/// Handshake messages as exchanged, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript(pub Vec<u8>);

impl Transcript {
    fn new(msg1: &[u8], msg2: &[u8]) -> Self {
        let mut t = Vec::with_capacity(8 + msg1.len() + msg2.len());
        t.extend_from_slice(&(msg1.len() as u32).to_be_bytes());
        t.extend_from_slice(msg1);
        t.extend_from_slice(&(msg2.len() as u32).to_be_bytes());
        t.extend_from_slice(msg2);
        Transcript(t)
    }
}

fn identities(binding: &str) -> (Identity, Identity) {
    let a = format!("pcp/initiator|{binding}");
    let b = format!("pcp/responder|{binding}");
    (Identity::new(a.as_bytes()), Identity::new(b.as_bytes()))
}

/// Expands the PAKE output into directional and confirmation keys.
pub fn derive_keys(master: &[u8], role: Role) -> SessionKeys {
    let hk = Hkdf::<Sha256>::new(Some(HKDF_SALT), master);
    let expand = |label: &[u8]| {
        let mut k = [0u8; 32];
        hk.expand(label, &mut k).expect("32 bytes is a valid HKDF length");
        k
    };
    let ki = expand(LABEL_SEND_INITIATOR);
    let kr = expand(LABEL_SEND_RESPONDER);
    let kc = expand(LABEL_CONFIRM);
    match role {
        Role::Initiator => SessionKeys {
            k_send: ki,
            k_recv: kr,
            k_confirm: kc,
            role,
        },
        Role::Responder => SessionKeys {
            k_send: kr,
            k_recv: ki,
            k_confirm: kc,
            role,
        },
    }
}

fn spake_err(e: spake2::Error) -> AuthError {
    AuthError::Protocol(format!("pake message rejected: {e}"))
}

fn encode_msg1(binding: &str, spake_msg: &[u8]) -> Vec<u8> {
    let mut p = Vec::with_capacity(2 + binding.len() + spake_msg.len());
    p.extend_from_slice(&(binding.len() as u16).to_be_bytes());
    p.extend_from_slice(binding.as_bytes());
    p.extend_from_slice(spake_msg);
    p
}

fn decode_msg1(payload: &[u8]) -> Result<(String, &[u8]), AuthError> {
    if payload.len() < 2 {
        return Err(AuthError::Protocol("short pake-msg-1".into()));
    }
    let len = u16::from_be_bytes([payload[0], payload[1]]) as usize;
    if len > MAX_BINDING_LEN || payload.len() != 2 + len + SPAKE2_MSG_LEN {
        return Err(AuthError::Protocol("malformed pake-msg-1".into()));
    }
    let binding =
        std::str::from_utf8(&payload[2..2 + len]).map_err(|_| AuthError::Protocol("binding is not UTF-8".into()))?;
    Ok((binding.to_string(), &payload[2 + len..]))
}

/// Runs the PAKE as either role. A responder only accepts the binding in
/// `secret.session_binding`; see [`pake_respond`] for a set of bindings.
pub async fn pake_handshake<R: RngCore + CryptoRng>(
    stream: &mut FramedStream,
    secret: &PakeSecret,
    role: Role,
    rng: &mut R,
) -> Result<(SessionKeys, Transcript), AuthError> {
    match role {
        Role::Initiator => pake_initiate(stream, secret, rng).await,
        Role::Responder => {
            let bindings = [secret.session_binding.clone()];
            let (keys, transcript, _) = pake_respond(stream, &secret.passphrase, &bindings, rng).await?;
            Ok((keys, transcript))
        }
    }
}

pub async fn pake_initiate<R: RngCore + CryptoRng>(
    stream: &mut FramedStream,
    secret: &PakeSecret,
    rng: &mut R,
) -> Result<(SessionKeys, Transcript), AuthError> {
    if secret.session_binding.len() > MAX_BINDING_LEN {
        return Err(AuthError::Protocol("session binding too long".into()));
    }
    let (id_a, id_b) = identities(&secret.session_binding);
    let (state, msg_a) =
        Spake2::<Ed25519Group>::start_a_with_rng(&Password::new(&secret.passphrase), &id_a, &id_b, &mut *rng);
    let msg1 = encode_msg1(&secret.session_binding, &msg_a);
    stream.write_frame(FrameKind::PakeMsg1, &msg1).await?;
    let msg2 = stream.read_frame().await?.expect(FrameKind::PakeMsg2)?.payload;
    let master = state.finish(&msg2).map_err(spake_err)?;
    Ok((derive_keys(&master, Role::Initiator), Transcript::new(&msg1, &msg2)))
}

/// Responder side. Returns the binding the initiator used, which must be one
/// of `bindings`.
pub async fn pake_respond<R: RngCore + CryptoRng>(
    stream: &mut FramedStream,
    passphrase: &[u8],
    bindings: &[String],
    rng: &mut R,
) -> Result<(SessionKeys, Transcript, String), AuthError> {
    let msg1 = stream.read_frame().await?.expect(FrameKind::PakeMsg1)?.payload;
    let (binding, msg_a) = decode_msg1(&msg1)?;
    if !bindings.contains(&binding) {
        return Err(AuthError::Protocol(format!("unknown session binding {binding:?}")));
    }
    let (id_a, id_b) = identities(&binding);
    let (state, msg_b) = Spake2::<Ed25519Group>::start_b_with_rng(&Password::new(passphrase), &id_a, &id_b, &mut *rng);
    let master = state.finish(msg_a).map_err(spake_err)?;
    stream.write_frame(FrameKind::PakeMsg2, &msg_b).await?;
    Ok((
        derive_keys(&master, Role::Responder),
        Transcript::new(&msg1, &msg_b),
        binding,
    ))
}

fn confirm_tag(key: &[u8; 32], label: &[u8], transcript: &Transcript) -> [u8; TAG_LEN] {
    let mut mac = <HmacSha256 as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(label);
    mac.update(&transcript.0);
    mac.finalize().into_bytes().into()
}

/// Exchanges transcript MACs. On mismatch the stream is closed before any
/// application data is sent.
pub async fn confirm_key(
    mut stream: FramedStream,
    keys: SessionKeys,
    transcript: &Transcript,
) -> Result<SecureChannel, AuthError> {
    let (mine, theirs) = match keys.role {
        Role::Initiator => (CONFIRM_INITIATOR, CONFIRM_RESPONDER),
        Role::Responder => (CONFIRM_RESPONDER, CONFIRM_INITIATOR),
    };
    let tag = confirm_tag(&keys.k_confirm, mine, transcript);
    stream.write_frame(FrameKind::ConfirmTag, &tag).await?;
    let peer = match stream.read_frame().await {
        Ok(f) => f.expect(FrameKind::ConfirmTag)?.payload,
        // a peer that failed verification hangs up without sending more
        Err(WireError::Eof) => {
            stream.close();
            return Err(AuthError::AuthenticationFailure);
        }
        Err(e) => {
            stream.close();
            return Err(e.into());
        }
    };
    let expected = confirm_tag(&keys.k_confirm, theirs, transcript);
    if peer.len() != TAG_LEN || !bool::from(peer.as_slice().ct_eq(&expected)) {
        stream.close();
        return Err(AuthError::AuthenticationFailure);
    }
    Ok(SecureChannel::new(stream, &keys))
}

/// Initiator handshake plus confirmation under one deadline.
pub async fn authenticate_initiator<R: RngCore + CryptoRng>(
    stream: FramedStream,
    secret: &PakeSecret,
    rng: &mut R,
    clock: &dyn Clock,
    deadline_ms: u64,
) -> Result<SecureChannel, AuthError> {
    let work = async move {
        let mut stream = stream;
        let (keys, transcript) = pake_initiate(&mut stream, secret, rng).await?;
        confirm_key(stream, keys, &transcript).await
    };
    with_deadline(clock, deadline_ms, work).await
}

/// Responder handshake plus confirmation under one deadline. Returns the
/// binding the initiator chose.
pub async fn authenticate_responder<R: RngCore + CryptoRng>(
    stream: FramedStream,
    passphrase: &[u8],
    bindings: &[String],
    rng: &mut R,
    clock: &dyn Clock,
    deadline_ms: u64,
) -> Result<(SecureChannel, String), AuthError> {
    let work = async move {
        let mut stream = stream;
        let (keys, transcript, binding) = pake_respond(&mut stream, passphrase, bindings, rng).await?;
        Ok((confirm_key(stream, keys, &transcript).await?, binding))
    };
    with_deadline(clock, deadline_ms, work).await
}

async fn with_deadline<T>(
    clock: &dyn Clock,
    deadline_ms: u64,
    work: impl std::future::Future<Output = Result<T, AuthError>>,
) -> Result<T, AuthError> {
    let timer = clock.sleep_until(deadline_ms);
    futures::pin_mut!(work);
    match futures::future::select(work, timer).await {
        futures::future::Either::Left((r, _)) => r,
        futures::future::Either::Right(_) => Err(AuthError::Timeout),
    }
}

struct CipherState {
    aead: ChaCha20Poly1305,
    counter: u64,
    label: &'static [u8],
}

impl CipherState {
    fn new(key: &[u8; 32], label: &'static [u8]) -> Self {
        CipherState {
            aead: ChaCha20Poly1305::new(Key::from_slice(key)),
            counter: 0,
            label,
        }
    }

    fn nonce(counter: u64) -> Nonce {
        let mut n = [0u8; 12];
        n[4..].copy_from_slice(&counter.to_be_bytes());
        *Nonce::from_slice(&n)
    }

    /// Reserves the next nonce. The last counter value is never used so the
    /// increment cannot wrap.
    fn take(&mut self) -> Result<u64, AuthError> {
        if self.counter == u64::MAX {
            return Err(AuthError::Exhausted);
        }
        let c = self.counter;
        self.counter += 1;
        Ok(c)
    }
}

/// Authenticated, encrypted framing over a confirmed connection.
///
/// Each direction has its own key and a strictly increasing 64-bit nonce
/// counter. Any failed open aborts the channel permanently.
pub struct SecureChannel {
    stream: FramedStream,
    send: CipherState,
    recv: CipherState,
    role: Role,
    aborted: bool,
}

impl SecureChannel {
    fn new(stream: FramedStream, keys: &SessionKeys) -> Self {
        let (send_label, recv_label) = match keys.role {
            Role::Initiator => (DATA_INITIATOR, DATA_RESPONDER),
            Role::Responder => (DATA_RESPONDER, DATA_INITIATOR),
        };
        SecureChannel {
            stream,
            send: CipherState::new(&keys.k_send, send_label),
            recv: CipherState::new(&keys.k_recv, recv_label),
            role: keys.role,
            aborted: false,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn remote(&self) -> PeerAddress {
        self.stream.remote()
    }

    pub fn relayed(&self) -> bool {
        self.stream.relayed()
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted
    }

    /// Next nonce counter values (send, receive).
    pub fn counters(&self) -> (u64, u64) {
        (self.send.counter, self.recv.counter)
    }

    /// Encrypts `plaintext` into a complete app-data wire frame.
    pub fn seal(&mut self, plaintext: &[u8]) -> Result<Vec<u8>, AuthError> {
        if self.aborted {
            return Err(AuthError::Aborted);
        }
        let counter = match self.send.take() {
            Ok(c) => c,
            Err(e) => {
                self.abort();
                return Err(e);
            }
        };
        let ct = self
            .send
            .aead
            .encrypt(
                &CipherState::nonce(counter),
                Payload {
                    msg: plaintext,
                    aad: self.send.label,
                },
            )
            .map_err(|_| AuthError::Protocol("encryption failed".into()))?;
        Ok(encode_frame(FrameKind::AppData, &ct))
    }

    /// Verifies and decrypts one app-data frame with the next receive nonce.
    pub fn open(&mut self, frame: &Frame) -> Result<Vec<u8>, AuthError> {
        if self.aborted {
            return Err(AuthError::Aborted);
        }
        if frame.kind != FrameKind::AppData {
            self.abort();
            return Err(AuthError::Protocol(format!("unexpected {:?} frame", frame.kind)));
        }
        let counter = match self.recv.take() {
            Ok(c) => c,
            Err(e) => {
                self.abort();
                return Err(e);
            }
        };
        let pt = self.recv.aead.decrypt(
            &CipherState::nonce(counter),
            Payload {
                msg: &frame.payload,
                aad: self.recv.label,
            },
        );
        match pt {
            Ok(pt) => Ok(pt),
            Err(_) => {
                self.abort();
                Err(AuthError::Decrypt)
            }
        }
    }

    pub async fn send(&mut self, plaintext: &[u8]) -> Result<(), AuthError> {
        let frame = self.seal(plaintext)?;
        if let Err(e) = self.stream.write_raw(&frame).await {
            self.abort();
            return Err(e.into());
        }
        Ok(())
    }

    pub async fn recv(&mut self) -> Result<Vec<u8>, AuthError> {
        if self.aborted {
            return Err(AuthError::Aborted);
        }
        let frame = match self.stream.read_frame().await {
            Ok(f) => f,
            Err(e) => {
                self.abort();
                return Err(e.into());
            }
        };
        self.open(&frame)
    }

    /// Drops the connection; no resynchronization is attempted.
    pub fn abort(&mut self) {
        self.aborted = true;
        self.stream.close();
    }

    pub fn close(&mut self) {
        self.stream.close();
    }

    #[cfg(test)]
    pub(crate) fn set_send_counter(&mut self, c: u64) {
        self.send.counter = c;
    }
}
