//! Real transport: tokio TCP streams and the wall clock.
//!
//! Runs on a current-thread runtime inside a `LocalSet`. A dialer opens
//! every connection by writing its 16-byte peer id so the acceptor knows
//! who is calling.

use std::cell::RefCell;
use std::net::{IpAddr, SocketAddr};
use std::rc::Rc;
use std::time::Duration;

use futures::future::LocalBoxFuture;
use futures::FutureExt;
use pcp_core::net::{BoxStream, ByteStream, Endpoint, NetError};
use pcp_core::{Clock, Host, PeerAddress, PeerId};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::time::Instant;

const HELLO_TIMEOUT: Duration = Duration::from_secs(5);
const READ_BUF: usize = 64 * 1024;

/// Wall clock whose epoch can be shifted, so that hermetic runs can pin the
/// time slot.
pub struct RealClock {
    origin: Instant,
    base_ms: u64,
}

impl RealClock {
    pub fn system() -> Self {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self::starting_at(now)
    }

    /// A clock that reads `base_ms` now and advances in real time.
    pub fn starting_at(base_ms: u64) -> Self {
        RealClock {
            origin: Instant::now(),
            base_ms,
        }
    }
}

impl Clock for RealClock {
    fn now_ms(&self) -> u64 {
        self.base_ms + self.origin.elapsed().as_millis() as u64
    }

    fn sleep_until(&self, deadline_ms: u64) -> LocalBoxFuture<'static, ()> {
        let Some(wait) = deadline_ms.checked_sub(self.base_ms) else {
            return futures::future::ready(()).boxed_local();
        };
        // Far-future deadlines mean "never".
        match self.origin.checked_add(Duration::from_millis(wait)) {
            Some(at) if wait < u64::MAX / 4 => tokio::time::sleep_until(at).boxed_local(),
            _ => futures::future::pending().boxed_local(),
        }
    }

    fn settle(&self) -> LocalBoxFuture<'static, ()> {
        tokio::task::yield_now().boxed_local()
    }
}

pub struct TcpByteStream {
    stream: TcpStream,
    remote: PeerAddress,
    buf: Vec<u8>,
    closed: bool,
}

impl TcpByteStream {
    fn new(stream: TcpStream, remote: PeerAddress) -> Self {
        let _ = stream.set_nodelay(true);
        TcpByteStream {
            stream,
            remote,
            buf: vec![0u8; READ_BUF],
            closed: false,
        }
    }
}

fn io_err(e: std::io::Error) -> NetError {
    match e.kind() {
        std::io::ErrorKind::ConnectionReset
        | std::io::ErrorKind::BrokenPipe
        | std::io::ErrorKind::ConnectionAborted => NetError::Dropped,
        _ => NetError::Io(e.to_string()),
    }
}

impl ByteStream for TcpByteStream {
    fn send<'a>(&'a mut self, data: &'a [u8]) -> LocalBoxFuture<'a, Result<(), NetError>> {
        async move {
            if self.closed {
                return Err(NetError::Closed);
            }
            self.stream.write_all(data).await.map_err(io_err)
        }
        .boxed_local()
    }

    fn recv(&mut self) -> LocalBoxFuture<'_, Result<Option<Vec<u8>>, NetError>> {
        async move {
            match self.stream.read(&mut self.buf).await {
                Ok(0) => Ok(None),
                Ok(n) => Ok(Some(self.buf[..n].to_vec())),
                Err(e) => Err(io_err(e)),
            }
        }
        .boxed_local()
    }

    fn close(&mut self) {
        if !self.closed {
            self.closed = true;
            let _ = socket2::SockRef::from(&self.stream).shutdown(std::net::Shutdown::Write);
        }
    }

    fn remote(&self) -> PeerAddress {
        self.remote
    }
}

impl Drop for TcpByteStream {
    fn drop(&mut self) {
        self.close();
    }
}

/// A node listening on one TCP port.
pub struct TcpHost {
    addr: PeerAddress,
    listener: RefCell<Option<Rc<TcpListener>>>,
    clock: Rc<dyn Clock>,
    seed: [u8; 32],
}

impl TcpHost {
    /// Binds `ip:0`; the peer id is drawn from `seed`.
    pub async fn bind(ip: IpAddr, clock: Rc<dyn Clock>, seed: [u8; 32]) -> std::io::Result<Self> {
        let listener = TcpListener::bind(SocketAddr::new(ip, 0)).await?;
        let local = listener.local_addr()?;
        let mut rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::from_seed(seed);
        let peer_id = PeerId::random(&mut rng);
        let mut seed2 = [0u8; 32];
        rand::RngCore::fill_bytes(&mut rng, &mut seed2);
        Ok(TcpHost {
            addr: PeerAddress {
                peer_id,
                endpoint: Endpoint::Socket(local),
            },
            listener: RefCell::new(Some(Rc::new(listener))),
            clock,
            seed: seed2,
        })
    }

    pub fn port(&self) -> u16 {
        match self.addr.endpoint {
            Endpoint::Socket(a) => a.port(),
            Endpoint::Sim(_) => 0,
        }
    }
}

impl Host for TcpHost {
    fn address(&self) -> PeerAddress {
        self.addr
    }

    fn clock(&self) -> Rc<dyn Clock> {
        self.clock.clone()
    }

    fn dial(&self, to: PeerAddress) -> LocalBoxFuture<'static, Result<BoxStream, NetError>> {
        let me = self.addr.peer_id;
        async move {
            let Endpoint::Socket(sa) = to.endpoint else {
                return Err(NetError::Dial(format!("{to} is not a socket address")));
            };
            let mut s = TcpStream::connect(sa)
                .await
                .map_err(|e| NetError::Dial(format!("{sa}: {e}")))?;
            s.write_all(&me.0).await.map_err(io_err)?;
            Ok(Box::new(TcpByteStream::new(s, to)) as BoxStream)
        }
        .boxed_local()
    }

    fn accept(&self) -> LocalBoxFuture<'static, Result<BoxStream, NetError>> {
        let listener = self.listener.borrow().clone();
        async move {
            let Some(listener) = listener else {
                return Err(NetError::Unavailable("not listening".into()));
            };
            loop {
                let (mut s, from) = listener.accept().await.map_err(io_err)?;
                let mut id = [0u8; 16];
                match tokio::time::timeout(HELLO_TIMEOUT, s.read_exact(&mut id)).await {
                    Ok(Ok(_)) => {
                        let remote = PeerAddress {
                            peer_id: PeerId(id),
                            endpoint: Endpoint::Socket(from),
                        };
                        return Ok(Box::new(TcpByteStream::new(s, remote)) as BoxStream);
                    }
                    // Silent or broken callers are dropped; keep accepting.
                    _ => log::debug!(target: "pcp", "net.hello-fail from={from}"),
                }
            }
        }
        .boxed_local()
    }

    fn stop_listening(&self) {
        self.listener.borrow_mut().take();
    }

    fn seed(&self) -> [u8; 32] {
        self.seed
    }

    fn log(&self, event: &str, detail: String) {
        log::debug!(target: "pcp", "{event} {detail}");
    }
}
