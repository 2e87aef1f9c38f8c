//! TCP transport. Each frame is an 8-byte big-endian length followed by a
//! canonically encoded `Message`. Every peer gets one outbound connection,
//! redialed on failure; inbound connections only ever read.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::time::Duration;

use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt, BufWriter};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tracing::{debug, warn};

use pams_core::codec::Canonical;
use pams_core::p2p::{Message, Transport, TransportError};

pub const MAX_FRAME: u64 = 64 << 20;
const QUEUE: usize = 4096;

pub async fn write_frame<W: AsyncWrite + Unpin>(w: &mut W, body: &[u8]) -> std::io::Result<()> {
    w.write_all(&(body.len() as u64).to_be_bytes()).await?;
    w.write_all(body).await
}

/// `Ok(None)` on a clean end of stream.
pub async fn read_frame<R: AsyncRead + Unpin>(r: &mut R) -> std::io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 8];
    match r.read_exact(&mut len).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u64::from_be_bytes(len);
    if len > MAX_FRAME {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("frame of {len} bytes")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body).await?;
    Ok(Some(body))
}

/// Accepts peer connections and forwards decoded messages. Undecodable
/// frames close the connection.
pub fn spawn_listener(listener: TcpListener, inbound: mpsc::Sender<Message>, mut shutdown: watch::Receiver<bool>) {
    tokio::spawn(async move {
        loop {
            tokio::select! {
                accepted = listener.accept() => {
                    let Ok((stream, addr)) = accepted else { continue };
                    let _ = stream.set_nodelay(true);
                    tokio::spawn(read_loop(stream, addr, inbound.clone(), shutdown.clone()));
                }
                _ = shutdown.changed() => break,
            }
        }
    });
}

async fn read_loop(mut stream: TcpStream, addr: SocketAddr, inbound: mpsc::Sender<Message>, mut shutdown: watch::Receiver<bool>) {
    loop {
        let frame = tokio::select! {
            f = read_frame(&mut stream) => f,
            _ = shutdown.changed() => return,
        };
        match frame {
            Ok(Some(bytes)) => match Message::from_canonical_bytes(&bytes) {
                Ok(msg) => {
                    if inbound.send(msg).await.is_err() {
                        return;
                    }
                }
                Err(e) => {
                    warn!(%addr, error = %e, "dropping connection after undecodable frame");
                    return;
                }
            },
            Ok(None) => return,
            Err(e) => {
                debug!(%addr, error = %e, "peer connection closed");
                return;
            }
        }
    }
}

/// Outbound side: one queue and one dialer task per configured peer.
pub struct PeerLinks {
    queues: BTreeMap<String, mpsc::Sender<Vec<u8>>>,
}

impl PeerLinks {
    pub fn spawn(peers: &[(String, SocketAddr)], shutdown: watch::Receiver<bool>) -> Self {
        let mut queues = BTreeMap::new();
        for (id, addr) in peers {
            let (tx, rx) = mpsc::channel(QUEUE);
            tokio::spawn(dial_loop(id.clone(), *addr, rx, shutdown.clone()));
            queues.insert(id.clone(), tx);
        }
        PeerLinks { queues }
    }
}

impl Transport for PeerLinks {
    fn send(&self, to: &str, msg: Message) -> Result<(), TransportError> {
        let q = self.queues.get(to).ok_or_else(|| TransportError::UnknownPeer(to.to_owned()))?;
        // a full queue means the peer is far behind or down; consensus
        // tolerates the loss and sync repairs it
        q.try_send(msg.to_canonical_bytes()).map_err(|_| TransportError::PeerUnreachable(to.to_owned()))
    }
}

async fn dial_loop(id: String, addr: SocketAddr, mut rx: mpsc::Receiver<Vec<u8>>, mut shutdown: watch::Receiver<bool>) {
    let mut backoff = Duration::from_millis(50);
    loop {
        let connect = tokio::time::timeout(Duration::from_secs(2), TcpStream::connect(addr));
        let stream = tokio::select! {
            r = connect => r,
            _ = shutdown.changed() => return,
        };
        let stream = match stream {
            Ok(Ok(s)) => s,
            _ => {
                tokio::select! {
                    _ = tokio::time::sleep(backoff) => {}
                    _ = shutdown.changed() => return,
                }
                backoff = (backoff * 2).min(Duration::from_secs(2));
                continue;
            }
        };
        let _ = stream.set_nodelay(true);
        backoff = Duration::from_millis(50);
        debug!(peer = %id, %addr, "connected");
        let mut w = BufWriter::new(stream);
        loop {
            let frame = tokio::select! {
                f = rx.recv() => f,
                _ = shutdown.changed() => return,
            };
            let Some(frame) = frame else { return };
            let mut ok = write_frame(&mut w, &frame).await.is_ok();
            // batch whatever else is already queued before flushing
            while ok {
                match rx.try_recv() {
                    Ok(more) => ok = write_frame(&mut w, &more).await.is_ok(),
                    Err(_) => break,
                }
            }
            if !ok || w.flush().await.is_err() {
                debug!(peer = %id, "write failed; redialing");
                break;
            }
        }
    }
}
