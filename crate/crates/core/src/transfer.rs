//! File transfer over a [`SecureChannel`].
//!
//! Application messages travel inside app-data frames and start with a
//! sub-type byte: 0x01 manifest, 0x02 accept, 0x03 reject, 0x04 chunk
//! (`offset(8, BE) ‖ data`), 0x05 end. The receiver writes to a temporary
//! file and only renames it into place after the SHA-256 digest matches.
//! Nothing follows the end frame, so a sender's `Completed` means every
//! byte and the end frame were handed to the channel.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use futures::future::LocalBoxFuture;
use futures::FutureExt;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::auth::{AuthError, SecureChannel};
use crate::net::Clock;

pub const DEFAULT_CHUNK_SIZE: u32 = 65_536;
pub const MAX_CHUNK_SIZE: u32 = 16 * 1024 * 1024;
pub const MAX_FILENAME_LEN: usize = 255;
pub const DEFAULT_DECISION_TIMEOUT_MS: u64 = 60_000;

const MSG_MANIFEST: u8 = 0x01;
const MSG_ACCEPT: u8 = 0x02;
const MSG_REJECT: u8 = 0x03;
const MSG_CHUNK: u8 = 0x04;
const MSG_END: u8 = 0x05;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransferError {
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("transfer error: {0}")]
    Channel(#[from] AuthError),
    #[error("io error: {0}")]
    Io(String),
}

impl From<io::Error> for TransferError {
    fn from(e: io::Error) -> Self {
        TransferError::Io(e.to_string())
    }
}

/// Checks that `name` is a plain base name.
pub fn validate_filename(name: &str) -> Result<(), TransferError> {
    let bad = |why: &str| Err(TransferError::InvalidManifest(format!("filename {name:?} {why}")));
    if name.is_empty() {
        return bad("is empty");
    }
    if name.len() > MAX_FILENAME_LEN {
        return bad("is longer than 255 bytes");
    }
    if name == "." || name == ".." {
        return bad("is a relative directory");
    }
    if name.contains(['/', '\\', '\0']) {
        return bad("contains a path separator or NUL");
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferManifest {
    filename: String,
    size: u64,
    content_digest: [u8; 32],
    chunk_size: u32,
}

// Field order is the canonical (sorted) key order on the wire.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireManifest {
    chunk: u32,
    name: String,
    sha256: String,
    size: u64,
}

impl TransferManifest {
    pub fn new(filename: &str, size: u64, content_digest: [u8; 32], chunk_size: u32) -> Result<Self, TransferError> {
        validate_filename(filename)?;
        if chunk_size == 0 || chunk_size > MAX_CHUNK_SIZE {
            return Err(TransferError::InvalidManifest(format!(
                "chunk size {chunk_size} out of range"
            )));
        }
        Ok(TransferManifest {
            filename: filename.to_string(),
            size,
            content_digest,
            chunk_size,
        })
    }

    /// Size and digest from a full read of `reader`.
    pub fn from_reader(filename: &str, reader: &mut dyn Read, chunk_size: u32) -> Result<Self, TransferError> {
        let mut hasher = Sha256::new();
        let mut size = 0u64;
        let mut buf = vec![0u8; 64 * 1024];
        loop {
            let n = reader.read(&mut buf)?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            size += n as u64;
        }
        Self::new(filename, size, hasher.finalize().into(), chunk_size)
    }

    pub fn for_bytes(filename: &str, data: &[u8], chunk_size: u32) -> Result<Self, TransferError> {
        Self::new(filename, data.len() as u64, Sha256::digest(data).into(), chunk_size)
    }

    pub fn filename(&self) -> &str {
        &self.filename
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn content_digest(&self) -> [u8; 32] {
        self.content_digest
    }

    pub fn chunk_size(&self) -> u32 {
        self.chunk_size
    }

    pub fn chunk_count(&self) -> u64 {
        self.size.div_ceil(self.chunk_size as u64)
    }

    /// Canonical JSON: sorted keys, no whitespace.
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(&WireManifest {
            chunk: self.chunk_size,
            name: self.filename.clone(),
            sha256: hex::encode(self.content_digest),
            size: self.size,
        })
        .expect("manifest serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, TransferError> {
        let w: WireManifest =
            serde_json::from_slice(bytes).map_err(|e| TransferError::InvalidManifest(e.to_string()))?;
        let digest: [u8; 32] = hex::decode(&w.sha256)
            .ok()
            .and_then(|d| d.try_into().ok())
            .ok_or_else(|| TransferError::InvalidManifest("sha256 must be 64 hex chars".into()))?;
        Self::new(&w.name, w.size, digest, w.chunk)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AppMessage {
    Manifest(TransferManifest),
    Accept,
    Reject,
    Chunk { offset: u64, data: Vec<u8> },
    End,
}

impl AppMessage {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            AppMessage::Manifest(m) => {
                let mut v = vec![MSG_MANIFEST];
                v.extend(m.to_json());
                v
            }
            AppMessage::Accept => vec![MSG_ACCEPT],
            AppMessage::Reject => vec![MSG_REJECT],
            AppMessage::Chunk { offset, data } => {
                let mut v = Vec::with_capacity(9 + data.len());
                v.push(MSG_CHUNK);
                v.extend_from_slice(&offset.to_be_bytes());
                v.extend_from_slice(data);
                v
            }
            AppMessage::End => vec![MSG_END],
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TransferError> {
        let (&kind, body) = bytes
            .split_first()
            .ok_or_else(|| TransferError::Protocol("empty app message".into()))?;
        let empty = |m: AppMessage| {
            if body.is_empty() {
                Ok(m)
            } else {
                Err(TransferError::Protocol(format!(
                    "message {kind:#04x} carries a payload"
                )))
            }
        };
        match kind {
            MSG_MANIFEST => Ok(AppMessage::Manifest(TransferManifest::from_json(body)?)),
            MSG_ACCEPT => empty(AppMessage::Accept),
            MSG_REJECT => empty(AppMessage::Reject),
            MSG_CHUNK => {
                if body.len() < 8 {
                    return Err(TransferError::Protocol("short chunk".into()));
                }
                let offset = u64::from_be_bytes(body[..8].try_into().expect("8 bytes"));
                Ok(AppMessage::Chunk {
                    offset,
                    data: body[8..].to_vec(),
                })
            }
            MSG_END => empty(AppMessage::End),
            other => Err(TransferError::Protocol(format!("unknown app message {other:#04x}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
}

/// Where the receiver's accept/reject answer comes from.
pub trait DecisionSource {
    fn decide(&self, manifest: &TransferManifest) -> LocalBoxFuture<'static, Decision>;
}

/// Scripted answer for tests and `--yes`.
impl DecisionSource for Decision {
    fn decide(&self, _: &TransferManifest) -> LocalBoxFuture<'static, Decision> {
        futures::future::ready(*self).boxed_local()
    }
}

/// Never answers; the decision timeout turns this into a reject.
pub struct NoAnswer;

impl DecisionSource for NoAnswer {
    fn decide(&self, _: &TransferManifest) -> LocalBoxFuture<'static, Decision> {
        futures::future::pending().boxed_local()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferStatus {
    Completed,
    Rejected,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferOutcome {
    pub status: TransferStatus,
    /// Body bytes received (receiver) or sent (sender).
    pub bytes: u64,
    pub digest_verified: bool,
    /// Final location of the received file, when one was written.
    pub location: Option<String>,
    pub reason: Option<String>,
}

impl TransferOutcome {
    pub fn rejected() -> Self {
        TransferOutcome {
            status: TransferStatus::Rejected,
            bytes: 0,
            digest_verified: false,
            location: None,
            reason: None,
        }
    }

    pub fn aborted(bytes: u64, reason: impl Into<String>) -> Self {
        TransferOutcome {
            status: TransferStatus::Aborted,
            bytes,
            digest_verified: false,
            location: None,
            reason: Some(reason.into()),
        }
    }

    pub fn is_completed(&self) -> bool {
        self.status == TransferStatus::Completed
    }
}

/// Receives one file's bytes; nothing becomes visible until `commit`.
pub trait PartialFile: Write {
    fn commit(self: Box<Self>) -> io::Result<String>;
    fn discard(self: Box<Self>);
}

pub trait Destination {
    fn create(&mut self, filename: &str) -> io::Result<Box<dyn PartialFile>>;
}

/// Writes into a directory via a hidden temporary file and rename.
#[derive(Debug, Clone)]
pub struct DirDestination {
    dir: PathBuf,
}

impl DirDestination {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DirDestination { dir: dir.into() }
    }
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// First of `name`, `name (1).ext`, `name (2).ext`, ... that does not exist.
pub fn unique_path(dir: &Path, name: &str) -> PathBuf {
    let first = dir.join(name);
    if !first.exists() {
        return first;
    }
    let p = Path::new(name);
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or(name);
    let ext = p.extension().and_then(|s| s.to_str());
    (1u64..)
        .map(|i| match ext {
            Some(ext) => dir.join(format!("{stem} ({i}).{ext}")),
            None => dir.join(format!("{stem} ({i})")),
        })
        .find(|c| !c.exists())
        .expect("unbounded suffix search")
}

struct DirPartial {
    file: Option<fs::File>,
    temp: PathBuf,
    dir: PathBuf,
    name: String,
}

impl Write for DirPartial {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.file.as_mut().expect("open until commit").write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.file.as_mut().expect("open until commit").flush()
    }
}

impl PartialFile for DirPartial {
    fn commit(mut self: Box<Self>) -> io::Result<String> {
        let file = self.file.take().expect("open until commit");
        file.sync_all()?;
        drop(file);
        let target = unique_path(&self.dir, &self.name);
        fs::rename(&self.temp, &target)?;
        Ok(target.display().to_string())
    }

    fn discard(mut self: Box<Self>) {
        self.file.take();
        let _ = fs::remove_file(&self.temp);
    }
}

impl Drop for DirPartial {
    fn drop(&mut self) {
        if self.file.take().is_some() {
            let _ = fs::remove_file(&self.temp);
        }
    }
}

impl Destination for DirDestination {
    fn create(&mut self, filename: &str) -> io::Result<Box<dyn PartialFile>> {
        validate_filename(filename).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
        let n = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        let temp = self
            .dir
            .join(format!(".{filename}.pcp-partial-{}-{n}", std::process::id()));
        let file = fs::OpenOptions::new().write(true).create_new(true).open(&temp)?;
        Ok(Box::new(DirPartial {
            file: Some(file),
            temp,
            dir: self.dir.clone(),
            name: filename.to_string(),
        }))
    }
}

/// In-memory destination shared through an `Rc`.
#[derive(Debug, Clone, Default)]
pub struct MemoryDestination {
    files: Rc<RefCell<BTreeMap<String, Vec<u8>>>>,
}

impl MemoryDestination {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<Vec<u8>> {
        self.files.borrow().get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        self.files.borrow().keys().cloned().collect()
    }
}

struct MemPartial {
    files: Rc<RefCell<BTreeMap<String, Vec<u8>>>>,
    name: String,
    buf: Vec<u8>,
}

impl Write for MemPartial {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.buf.extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl PartialFile for MemPartial {
    fn commit(self: Box<Self>) -> io::Result<String> {
        let mut files = self.files.borrow_mut();
        let mut name = self.name.clone();
        let mut i = 1;
        while files.contains_key(&name) {
            name = format!("{} ({i})", self.name);
            i += 1;
        }
        files.insert(name.clone(), self.buf);
        Ok(name)
    }

    fn discard(self: Box<Self>) {}
}

impl Destination for MemoryDestination {
    fn create(&mut self, filename: &str) -> io::Result<Box<dyn PartialFile>> {
        Ok(Box::new(MemPartial {
            files: self.files.clone(),
            name: filename.to_string(),
            buf: Vec::new(),
        }))
    }
}

async fn recv_message(chan: &mut SecureChannel) -> Result<AppMessage, TransferError> {
    let bytes = chan.recv().await?;
    AppMessage::decode(&bytes)
}

/// Sender: transmits the manifest and waits for the receiver's answer.
pub async fn send_manifest(chan: &mut SecureChannel, manifest: &TransferManifest) -> Result<Decision, TransferError> {
    chan.send(&AppMessage::Manifest(manifest.clone()).encode()).await?;
    match recv_message(chan).await? {
        AppMessage::Accept => Ok(Decision::Accept),
        AppMessage::Reject => Ok(Decision::Reject),
        other => {
            chan.abort();
            Err(TransferError::Protocol(format!(
                "expected accept/reject, got {other:?}"
            )))
        }
    }
}

/// Receiver: reads the manifest frame.
pub async fn recv_manifest(chan: &mut SecureChannel) -> Result<TransferManifest, TransferError> {
    match recv_message(chan).await? {
        AppMessage::Manifest(m) => Ok(m),
        other => {
            chan.abort();
            Err(TransferError::Protocol(format!("expected manifest, got {other:?}")))
        }
    }
}

/// Receiver: asks `source`, rejecting when no answer arrives within
/// `timeout_ms`, and sends the answer.
pub async fn await_confirmation(
    chan: &mut SecureChannel,
    manifest: &TransferManifest,
    source: &dyn DecisionSource,
    clock: &dyn Clock,
    timeout_ms: u64,
) -> Result<Decision, TransferError> {
    let ask = source.decide(manifest);
    let timer = clock.sleep_ms(timeout_ms);
    let decision = match futures::future::select(ask, timer).await {
        futures::future::Either::Left((d, _)) => d,
        futures::future::Either::Right(_) => Decision::Reject,
    };
    let msg = match decision {
        Decision::Accept => AppMessage::Accept,
        Decision::Reject => AppMessage::Reject,
    };
    chan.send(&msg.encode()).await?;
    Ok(decision)
}

/// Sender: streams the body after an accept. The body is hashed again while
/// sending; if it no longer matches the manifest the end frame is withheld
/// and the channel aborted.
pub async fn stream_file(
    chan: &mut SecureChannel,
    source: &mut dyn Read,
    manifest: &TransferManifest,
    progress: &mut dyn FnMut(u64, u64),
) -> TransferOutcome {
    let total = manifest.size();
    let mut buf = vec![0u8; manifest.chunk_size() as usize];
    let mut hasher = Sha256::new();
    let mut offset = 0u64;
    progress(0, total);
    while offset < total {
        let want = ((total - offset) as usize).min(buf.len());
        if let Err(e) = source.read_exact(&mut buf[..want]) {
            chan.abort();
            return TransferOutcome::aborted(offset, format!("source read failed: {e}"));
        }
        hasher.update(&buf[..want]);
        let msg = AppMessage::Chunk {
            offset,
            data: buf[..want].to_vec(),
        };
        if let Err(e) = chan.send(&msg.encode()).await {
            return TransferOutcome::aborted(offset, e.to_string());
        }
        offset += want as u64;
        progress(offset, total);
    }
    let mut extra = [0u8; 1];
    let grew = matches!(source.read(&mut extra), Ok(n) if n > 0);
    let digest: [u8; 32] = hasher.finalize().into();
    if grew || digest != manifest.content_digest() {
        chan.abort();
        return TransferOutcome::aborted(offset, "source changed during transfer");
    }
    if let Err(e) = chan.send(&AppMessage::End.encode()).await {
        return TransferOutcome::aborted(offset, e.to_string());
    }
    TransferOutcome {
        status: TransferStatus::Completed,
        bytes: offset,
        digest_verified: true,
        location: None,
        reason: None,
    }
}

/// Receiver: collects chunks into `dest` and commits only on a verified
/// digest. Any other ending discards the partial file.
pub async fn receive_file(
    chan: &mut SecureChannel,
    manifest: &TransferManifest,
    dest: &mut dyn Destination,
    progress: &mut dyn FnMut(u64, u64),
) -> TransferOutcome {
    let total = manifest.size();
    let mut partial = match dest.create(manifest.filename()) {
        Ok(p) => p,
        Err(e) => {
            chan.abort();
            return TransferOutcome::aborted(0, format!("cannot create destination: {e}"));
        }
    };
    let mut hasher = Sha256::new();
    let mut received = 0u64;
    progress(0, total);
    let fail = |partial: Box<dyn PartialFile>, chan: &mut SecureChannel, received, why: String| {
        partial.discard();
        chan.abort();
        TransferOutcome::aborted(received, why)
    };
    loop {
        let msg = match recv_message(chan).await {
            Ok(m) => m,
            Err(e) => return fail(partial, chan, received, e.to_string()),
        };
        match msg {
            AppMessage::Chunk { offset, data } => {
                if offset != received
                    || data.len() > manifest.chunk_size() as usize
                    || received + data.len() as u64 > total
                {
                    return fail(partial, chan, received, format!("unexpected chunk at offset {offset}"));
                }
                if let Err(e) = partial.write_all(&data) {
                    return fail(partial, chan, received, format!("write failed: {e}"));
                }
                hasher.update(&data);
                received += data.len() as u64;
                progress(received, total);
            }
            AppMessage::End => {
                let digest: [u8; 32] = hasher.finalize().into();
                if received != total || digest != manifest.content_digest() {
                    return fail(partial, chan, received, "digest mismatch".to_string());
                }
                let location = match partial.commit() {
                    Ok(l) => l,
                    Err(e) => {
                        chan.abort();
                        return TransferOutcome::aborted(received, format!("commit failed: {e}"));
                    }
                };
                chan.close();
                return TransferOutcome {
                    status: TransferStatus::Completed,
                    bytes: received,
                    digest_verified: true,
                    location: Some(location),
                    reason: None,
                };
            }
            other => return fail(partial, chan, received, format!("unexpected {other:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EMPTY_SHA256: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";

    #[test]
    fn manifest_golden_json() {
        let m = TransferManifest::new("report.pdf", 1_048_576, [0xab; 32], DEFAULT_CHUNK_SIZE).unwrap();
        let json = String::from_utf8(m.to_json()).unwrap();
        assert_eq!(
            json,
            format!(
                "{{\"chunk\":65536,\"name\":\"report.pdf\",\"sha256\":\"{}\",\"size\":1048576}}",
                "ab".repeat(32)
            )
        );
        assert_eq!(TransferManifest::from_json(json.as_bytes()).unwrap(), m);
    }

    #[test]
    fn empty_file_manifest() {
        let m = TransferManifest::for_bytes("empty", b"", DEFAULT_CHUNK_SIZE).unwrap();
        assert_eq!(m.size(), 0);
        assert_eq!(hex::encode(m.content_digest()), EMPTY_SHA256);
        assert_eq!(m.chunk_count(), 0);
    }

    #[test]
    fn chunk_count_arithmetic() {
        let m = TransferManifest::new("a", 1 << 20, [0; 32], 65_536).unwrap();
        assert_eq!(m.chunk_count(), 16);
        let m = TransferManifest::new("a", 65_537, [0; 32], 65_536).unwrap();
        assert_eq!(m.chunk_count(), 2);
    }

    #[test]
    fn filename_sanitization() {
        for bad in ["../../etc/passwd", "..", ".", "", "a/b", "a\\b", "nul\0"] {
            assert!(TransferManifest::new(bad, 1, [0; 32], 1024).is_err(), "{bad:?}");
        }
        assert!(TransferManifest::new(&"x".repeat(256), 1, [0; 32], 1024).is_err());
        assert!(TransferManifest::new(&"x".repeat(255), 1, [0; 32], 1024).is_ok());
        assert!(TransferManifest::new(".hidden", 1, [0; 32], 1024).is_ok());
        let json = br#"{"chunk":1024,"name":"../x","sha256":"00","size":1}"#;
        assert!(TransferManifest::from_json(json).is_err());
    }

    #[test]
    fn manifest_rejects_bad_fields() {
        assert!(TransferManifest::new("a", 1, [0; 32], 0).is_err());
        assert!(TransferManifest::from_json(br#"{"chunk":1,"name":"a","sha256":"zz","size":1}"#).is_err());
        let extra = format!(
            r#"{{"chunk":1,"extra":1,"name":"a","sha256":"{}","size":1}}"#,
            "00".repeat(32)
        );
        assert!(TransferManifest::from_json(extra.as_bytes()).is_err());
    }

    #[test]
    fn app_message_golden_bytes() {
        assert_eq!(AppMessage::Accept.encode(), vec![0x02]);
        assert_eq!(AppMessage::Reject.encode(), vec![0x03]);
        assert_eq!(AppMessage::End.encode(), vec![0x05]);
        assert_eq!(
            AppMessage::Chunk {
                offset: 0x0102,
                data: vec![9, 9]
            }
            .encode(),
            vec![0x04, 0, 0, 0, 0, 0, 0, 1, 2, 9, 9]
        );
        assert!(AppMessage::decode(&[0x02, 0]).is_err());
        assert!(AppMessage::decode(&[0x04, 1, 2]).is_err());
        assert!(AppMessage::decode(&[0x09]).is_err());
        assert!(AppMessage::decode(&[]).is_err());
    }

    #[test]
    fn unique_path_suffixes() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(unique_path(dir.path(), "a.txt"), dir.path().join("a.txt"));
        fs::write(dir.path().join("a.txt"), b"1").unwrap();
        assert_eq!(unique_path(dir.path(), "a.txt"), dir.path().join("a (1).txt"));
        fs::write(dir.path().join("a (1).txt"), b"1").unwrap();
        assert_eq!(unique_path(dir.path(), "a.txt"), dir.path().join("a (2).txt"));
        fs::write(dir.path().join("noext"), b"1").unwrap();
        assert_eq!(unique_path(dir.path(), "noext"), dir.path().join("noext (1)"));
    }

    #[test]
    fn dir_destination_commit_and_discard() {
        let dir = tempfile::tempdir().unwrap();
        let mut dest = DirDestination::new(dir.path());
        let mut p = dest.create("f.bin").unwrap();
        p.write_all(b"data").unwrap();
        assert!(!dir.path().join("f.bin").exists());
        let loc = p.commit().unwrap();
        assert_eq!(fs::read(&loc).unwrap(), b"data");

        let mut p = dest.create("g.bin").unwrap();
        p.write_all(b"partial").unwrap();
        p.discard();
        let left: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(left.len(), 1, "only the committed file remains");

        // never overwrites
        let mut p = dest.create("f.bin").unwrap();
        p.write_all(b"second").unwrap();
        let loc2 = p.commit().unwrap();
        assert!(loc2.ends_with("f (1).bin"));
        assert_eq!(fs::read(dir.path().join("f.bin")).unwrap(), b"data");
    }

    proptest! {
        #[test]
        fn manifest_json_round_trip(name in "[a-zA-Z0-9 ._-]{1,40}", size: u64, digest: [u8; 32], chunk in 1u32..=MAX_CHUNK_SIZE) {
            prop_assume!(name != "." && name != "..");
            let m = TransferManifest::new(&name, size, digest, chunk).unwrap();
            prop_assert_eq!(TransferManifest::from_json(&m.to_json()).unwrap(), m.clone());
            prop_assert_eq!(AppMessage::decode(&AppMessage::Manifest(m.clone()).encode()).unwrap(), AppMessage::Manifest(m));
        }
    }
}
