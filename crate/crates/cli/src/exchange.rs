//! Discovery through a shared directory, for hermetic runs of two `pcp`
//! processes on one machine.
//!
//! Each backend keeps records under `<root>/<name>/<content key>/<peer>.json`.
//! Operations wait a latency drawn from the configured range and lookups may
//! be lost with the configured probability. Records a process wrote are
//! removed when its backend is dropped.

use std::cell::RefCell;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use futures::future::LocalBoxFuture;
use futures::FutureExt;
use pcp_core::discovery::{Capability, DiscoveryBackend, DiscoveryError, ProviderRecord};
use pcp_core::rendezvous::ContentKey;
use pcp_core::simnet::{BackendConfig, Latency};
use pcp_core::{Clock, PeerAddress};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

struct Inner {
    dir: PathBuf,
    name: &'static str,
    capability: Capability,
    clock: Rc<dyn Clock>,
    latency: Latency,
    interval_ms: u64,
    loss: f64,
    rng: RefCell<ChaCha20Rng>,
    written: RefCell<Vec<PathBuf>>,
}

pub struct ExchangeBackend {
    inner: Rc<Inner>,
}

impl ExchangeBackend {
    pub fn new(root: &Path, capability: Capability, cfg: &BackendConfig, clock: Rc<dyn Clock>, seed: u64) -> Self {
        let name = match capability {
            Capability::Global => "dht",
            Capability::LocalNetwork => "local",
        };
        ExchangeBackend {
            inner: Rc::new(Inner {
                dir: root.join(name),
                name,
                capability,
                clock,
                latency: cfg.latency_ms,
                interval_ms: cfg.query_interval_ms,
                loss: cfg.loss,
                rng: RefCell::new(ChaCha20Rng::seed_from_u64(seed)),
                written: RefCell::new(Vec::new()),
            }),
        }
    }
}

impl Inner {
    fn delay(&self) -> LocalBoxFuture<'static, ()> {
        let ms = self
            .rng
            .borrow_mut()
            .gen_range(self.latency.min_ms..=self.latency.max_ms);
        self.clock.sleep_ms(ms)
    }

    fn lost(&self) -> bool {
        self.loss > 0.0 && self.rng.borrow_mut().gen_bool(self.loss.min(1.0))
    }

    fn write(&self, key: ContentKey, record: &ProviderRecord) -> io::Result<()> {
        let dir = self.dir.join(key.to_hex());
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{}.json", record.provider.peer_id));
        let tmp = dir.join(format!(".{}.tmp", record.provider.peer_id));
        fs::write(&tmp, serde_json::to_vec(record).map_err(io::Error::other)?)?;
        fs::rename(&tmp, &path)?;
        let mut w = self.written.borrow_mut();
        if !w.contains(&path) {
            w.push(path);
        }
        Ok(())
    }

    fn read(&self, key: ContentKey) -> io::Result<Vec<PeerAddress>> {
        let dir = self.dir.join(key.to_hex());
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let now = self.clock.now_ms();
        let mut records = Vec::new();
        for entry in entries {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            // A record being replaced or removed concurrently is skipped.
            let Ok(bytes) = fs::read(&path) else { continue };
            let Ok(rec) = serde_json::from_slice::<ProviderRecord>(&bytes) else {
                continue;
            };
            if rec.is_live(now) {
                records.push(rec);
            }
        }
        records.sort_by_key(|r| (r.published_at, r.provider.peer_id));
        Ok(records.into_iter().map(|r| r.provider).collect())
    }
}

impl Drop for Inner {
    fn drop(&mut self) {
        for p in self.written.borrow().iter() {
            let _ = fs::remove_file(p);
        }
    }
}

impl DiscoveryBackend for ExchangeBackend {
    fn capability(&self) -> Capability {
        self.inner.capability
    }

    fn name(&self) -> &str {
        self.inner.name
    }

    fn clock(&self) -> Rc<dyn Clock> {
        self.inner.clock.clone()
    }

    fn query_interval_ms(&self) -> u64 {
        self.inner.interval_ms
    }

    fn publish(
        &self,
        key: ContentKey,
        me: PeerAddress,
        ttl_secs: u64,
    ) -> LocalBoxFuture<'static, Result<(), DiscoveryError>> {
        let inner = self.inner.clone();
        async move {
            inner.delay().await;
            let record = ProviderRecord::new(key, me, inner.clock.now_ms(), ttl_secs);
            inner
                .write(key, &record)
                .map_err(|e| DiscoveryError::Backend(format!("{}: {e}", inner.dir.display())))
        }
        .boxed_local()
    }

    fn lookup(&self, key: ContentKey) -> LocalBoxFuture<'static, Result<Vec<PeerAddress>, DiscoveryError>> {
        let inner = self.inner.clone();
        async move {
            inner.delay().await;
            if inner.lost() {
                return Ok(Vec::new());
            }
            inner
                .read(key)
                .map_err(|e| DiscoveryError::Backend(format!("{}: {e}", inner.dir.display())))
        }
        .boxed_local()
    }
}
