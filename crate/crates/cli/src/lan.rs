//! Local-network discovery over UDP multicast.
//!
//! A publishing node multicasts `{"v":1,"key":..,"peer":..,"port":..}`
//! once a second while its backend is alive; listeners remember the
//! announcements and answer lookups from that table. The provider address
//! is the datagram's source IP with the announced port.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::io;
use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4};
use std::rc::Rc;
use std::time::Duration;

use futures::future::LocalBoxFuture;
use futures::FutureExt;
use pcp_core::discovery::{Capability, DiscoveryBackend, DiscoveryError};
use pcp_core::net::Endpoint;
use pcp_core::rendezvous::ContentKey;
use pcp_core::{Clock, PeerAddress, PeerId};
use serde::{Deserialize, Serialize};
use socket2::{Domain, Protocol, Socket, Type};
use tokio::net::UdpSocket;
use tokio::task::JoinHandle;

pub const GROUP: Ipv4Addr = Ipv4Addr::new(239, 255, 80, 67);
pub const PORT: u16 = 47_667;
const ANNOUNCE_EVERY: Duration = Duration::from_secs(1);
/// Announcements older than this are forgotten.
const FORGET_AFTER_MS: u64 = 5_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Announcement {
    v: u8,
    key: String,
    peer: PeerId,
    port: u16,
}

#[derive(Default)]
struct Table {
    /// key → peer → (address, last heard).
    seen: BTreeMap<ContentKey, BTreeMap<PeerId, (PeerAddress, u64)>>,
    adverts: Vec<Announcement>,
}

pub struct LanBackend {
    clock: Rc<dyn Clock>,
    socket: Rc<UdpSocket>,
    table: Rc<RefCell<Table>>,
    tasks: Vec<JoinHandle<()>>,
}

fn multicast_socket() -> io::Result<std::net::UdpSocket> {
    let s = Socket::new(Domain::IPV4, Type::DGRAM, Some(Protocol::UDP))?;
    s.set_reuse_address(true)?;
    #[cfg(unix)]
    s.set_reuse_port(true)?;
    s.bind(&SocketAddr::V4(SocketAddrV4::new(Ipv4Addr::UNSPECIFIED, PORT)).into())?;
    s.join_multicast_v4(&GROUP, &Ipv4Addr::UNSPECIFIED)?;
    s.set_multicast_loop_v4(true)?;
    s.set_nonblocking(true)?;
    Ok(s.into())
}

impl LanBackend {
    /// Joins the group. Must be called inside a `LocalSet`.
    pub fn start(clock: Rc<dyn Clock>) -> io::Result<Self> {
        let socket = Rc::new(UdpSocket::from_std(multicast_socket()?)?);
        let table: Rc<RefCell<Table>> = Rc::default();
        let listen = {
            let (socket, table, clock) = (socket.clone(), table.clone(), clock.clone());
            tokio::task::spawn_local(async move {
                let mut buf = [0u8; 512];
                while let Ok((n, from)) = socket.recv_from(&mut buf).await {
                    let Ok(a) = serde_json::from_slice::<Announcement>(&buf[..n]) else {
                        continue;
                    };
                    let Some(key) = ContentKey::from_hex(&a.key) else {
                        continue;
                    };
                    if a.v != 1 {
                        continue;
                    }
                    let addr = PeerAddress {
                        peer_id: a.peer,
                        endpoint: Endpoint::Socket(SocketAddr::new(from.ip(), a.port)),
                    };
                    let now = clock.now_ms();
                    table
                        .borrow_mut()
                        .seen
                        .entry(key)
                        .or_default()
                        .insert(a.peer, (addr, now));
                }
            })
        };
        let announce = {
            let (socket, table) = (socket.clone(), table.clone());
            tokio::task::spawn_local(async move {
                let mut tick = tokio::time::interval(ANNOUNCE_EVERY);
                loop {
                    tick.tick().await;
                    let msgs: Vec<Vec<u8>> = table
                        .borrow()
                        .adverts
                        .iter()
                        .filter_map(|a| serde_json::to_vec(a).ok())
                        .collect();
                    for m in msgs {
                        if let Err(e) = socket.send_to(&m, (GROUP, PORT)).await {
                            log::debug!(target: "pcp", "lan.announce-fail {e}");
                        }
                    }
                }
            })
        };
        Ok(LanBackend {
            clock,
            socket,
            table,
            tasks: vec![listen, announce],
        })
    }
}

impl Drop for LanBackend {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

impl DiscoveryBackend for LanBackend {
    fn capability(&self) -> Capability {
        Capability::LocalNetwork
    }

    fn name(&self) -> &str {
        "lan"
    }

    fn clock(&self) -> Rc<dyn Clock> {
        self.clock.clone()
    }

    fn query_interval_ms(&self) -> u64 {
        250
    }

    fn publish(
        &self,
        key: ContentKey,
        me: PeerAddress,
        _ttl: u64,
    ) -> LocalBoxFuture<'static, Result<(), DiscoveryError>> {
        let Endpoint::Socket(sa) = me.endpoint else {
            return futures::future::ready(Err(DiscoveryError::Backend("not a socket address".into()))).boxed_local();
        };
        let a = Announcement {
            v: 1,
            key: key.to_hex(),
            peer: me.peer_id,
            port: sa.port(),
        };
        {
            let mut t = self.table.borrow_mut();
            if !t.adverts.contains(&a) {
                t.adverts.push(a.clone());
            }
        }
        let socket = self.socket.clone();
        async move {
            let msg = serde_json::to_vec(&a).map_err(|e| DiscoveryError::Backend(e.to_string()))?;
            socket
                .send_to(&msg, (GROUP, PORT))
                .await
                .map(|_| ())
                .map_err(|e| DiscoveryError::Backend(format!("multicast send: {e}")))
        }
        .boxed_local()
    }

    fn lookup(&self, key: ContentKey) -> LocalBoxFuture<'static, Result<Vec<PeerAddress>, DiscoveryError>> {
        let now = self.clock.now_ms();
        let found = self
            .table
            .borrow()
            .seen
            .get(&key)
            .map(|m| {
                m.values()
                    .filter(|(_, at)| now.saturating_sub(*at) < FORGET_AFTER_MS)
                    .map(|(a, _)| *a)
                    .collect()
            })
            .unwrap_or_default();
        futures::future::ready(Ok(found)).boxed_local()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn announcement_wire_format() {
        let a = Announcement {
            v: 1,
            key: "00".repeat(32),
            peer: PeerId([0xab; 16]),
            port: 4242,
        };
        let text = serde_json::to_string(&a).unwrap();
        assert_eq!(
            text,
            format!(
                r#"{{"v":1,"key":"{}","peer":"{}","port":4242}}"#,
                "00".repeat(32),
                "ab".repeat(16)
            )
        );
        assert_eq!(serde_json::from_str::<Announcement>(&text).unwrap(), a);
    }
}
