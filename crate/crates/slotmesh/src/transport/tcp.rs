//! TCP transport: one connection per directed link, length-prefixed frames.
//!
//! Each node binds a listener and keeps an address table for its peers.
//! Outbound connections are created lazily on first send (or eagerly via
//! [`TcpTransport::connect_all`] when handshake cost must stay out of a
//! measured section). Every accepted connection is pumped by a background
//! thread into one inbox channel, so a single blocking receive observes
//! all peers. Links stay open for the transport's lifetime and close on
//! drop.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::Duration;

use crate::protocol::WireMessage;
use crate::transport::{wire, Transport, TransportError, DEFAULT_FRAME_LIMIT};
use crate::NodeId;

#[derive(Debug, Clone)]
pub struct TcpConfig {
    pub node_id: NodeId,
    /// Listen address, e.g. `127.0.0.1:0` for an OS-assigned port.
    pub listen: String,
    /// Peer address table; may be set after binding via
    /// [`TcpTransport::set_peers`] once all ports are known.
    pub peers: BTreeMap<NodeId, String>,
    pub frame_limit: usize,
    /// Extra connect attempts before giving up; 0 fails fast.
    pub connect_retries: u32,
    pub retry_delay: Duration,
}

impl TcpConfig {
    pub fn new(node_id: NodeId, listen: impl Into<String>) -> Self {
        TcpConfig {
            node_id,
            listen: listen.into(),
            peers: BTreeMap::new(),
            frame_limit: DEFAULT_FRAME_LIMIT,
            connect_retries: 0,
            retry_delay: Duration::from_millis(50),
        }
    }
}

pub struct TcpTransport {
    me: NodeId,
    local_addr: SocketAddr,
    peers: BTreeMap<NodeId, String>,
    outbound: BTreeMap<NodeId, TcpStream>,
    inbox: mpsc::Receiver<WireMessage>,
    frame_limit: usize,
    connect_retries: u32,
    retry_delay: Duration,
    shutdown: Arc<AtomicBool>,
    acceptor: Option<thread::JoinHandle<()>>,
}

impl TcpTransport {
    /// Binds the listener and starts accepting inbound links.
    pub fn bind(config: TcpConfig) -> Result<Self, TransportError> {
        let listener = TcpListener::bind(&config.listen).map_err(|e| TransportError::BindFailed {
            addr: config.listen.clone(),
            source: e,
        })?;
        let local_addr = listener.local_addr().map_err(|e| TransportError::BindFailed {
            addr: config.listen.clone(),
            source: e,
        })?;
        let (tx, rx) = mpsc::channel();
        let shutdown = Arc::new(AtomicBool::new(false));
        let acceptor = {
            let shutdown = Arc::clone(&shutdown);
            let limit = config.frame_limit;
            thread::Builder::new()
                .name(format!("slotmesh-accept-{}", config.node_id))
                .spawn(move || accept_loop(listener, tx, limit, shutdown))
                .expect("spawn acceptor thread")
        };
        Ok(TcpTransport {
            me: config.node_id,
            local_addr,
            peers: config.peers,
            outbound: BTreeMap::new(),
            inbox: rx,
            frame_limit: config.frame_limit,
            connect_retries: config.connect_retries,
            retry_delay: config.retry_delay,
            shutdown,
            acceptor: Some(acceptor),
        })
    }

    pub fn node_id(&self) -> NodeId {
        self.me
    }

    /// The bound address; useful after listening on port 0.
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn set_peers(&mut self, peers: BTreeMap<NodeId, String>) {
        self.peers = peers;
    }

    /// Eagerly connects to every peer in the address table.
    pub fn connect_all(&mut self) -> Result<(), TransportError> {
        let ids: Vec<NodeId> = self.peers.keys().copied().collect();
        for id in ids {
            self.stream_to(id)?;
        }
        Ok(())
    }

    fn stream_to(&mut self, to: NodeId) -> Result<&mut TcpStream, TransportError> {
        if !self.outbound.contains_key(&to) {
            let addr = self
                .peers
                .get(&to)
                .ok_or(TransportError::UnknownPeer(to))?
                .clone();
            let stream = connect_with_retry(&addr, self.connect_retries, self.retry_delay)?;
            let _ = stream.set_nodelay(true);
            self.outbound.insert(to, stream);
        }
        Ok(self.outbound.get_mut(&to).unwrap())
    }
}

fn connect_with_retry(
    addr: &str,
    retries: u32,
    delay: Duration,
) -> Result<TcpStream, TransportError> {
    let mut attempts_left = retries;
    loop {
        match TcpStream::connect(addr) {
            Ok(stream) => return Ok(stream),
            Err(e) if attempts_left > 0 => {
                attempts_left -= 1;
                let _ = e;
                thread::sleep(delay);
            }
            Err(e) => {
                return Err(TransportError::ConnectRefused {
                    addr: addr.to_string(),
                    source: e,
                })
            }
        }
    }
}

fn accept_loop(
    listener: TcpListener,
    tx: mpsc::Sender<WireMessage>,
    frame_limit: usize,
    shutdown: Arc<AtomicBool>,
) {
    loop {
        match listener.accept() {
            Ok((stream, _)) => {
                if shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let tx = tx.clone();
                let _ = thread::Builder::new()
                    .name("slotmesh-link".into())
                    .spawn(move || pump_link(stream, tx, frame_limit));
            }
            Err(_) => {
                if shutdown.load(Ordering::SeqCst) {
                    break;
                }
                thread::sleep(Duration::from_millis(10));
            }
        }
    }
}

/// Reads frames off one inbound connection into the shared inbox until the
/// peer closes the link. A malformed or oversized frame also tears the
/// link down; the transport assumes reliable, well-behaved peers.
fn pump_link(stream: TcpStream, tx: mpsc::Sender<WireMessage>, frame_limit: usize) {
    let _ = stream.set_nodelay(true);
    let mut reader = BufReader::new(stream);
    loop {
        match wire::read_frame(&mut reader, frame_limit) {
            Ok(Some(msg)) => {
                if tx.send(msg).is_err() {
                    break; // receiver gone
                }
            }
            Ok(None) => break, // clean EOF
            Err(e) => {
                log::warn!("dropping inbound link after frame error: {e}");
                break;
            }
        }
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, to: NodeId, msg: WireMessage) -> Result<(), TransportError> {
        if msg.payload.len() > self.frame_limit {
            return Err(TransportError::FrameTooLarge {
                actual: msg.payload.len(),
                limit: self.frame_limit,
            });
        }
        let limit = self.frame_limit;
        let stream = self.stream_to(to)?;
        wire::write_frame(stream, &msg, limit)
            .map_err(|e| TransportError::LinkIo { peer: to, source: e })
    }

    fn recv(&mut self) -> Result<WireMessage, TransportError> {
        self.inbox.recv().map_err(|_| TransportError::Closed)
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<WireMessage, TransportError> {
        self.inbox.recv_timeout(timeout).map_err(|e| match e {
            mpsc::RecvTimeoutError::Timeout => TransportError::Timeout,
            mpsc::RecvTimeoutError::Disconnected => TransportError::Closed,
        })
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Wake the acceptor so it can observe the flag.
        let _ = TcpStream::connect(self.local_addr);
        if let Some(handle) = self.acceptor.take() {
            let _ = handle.join();
        }
    }
}

/// Builds a fully connected loopback mesh for nodes `1..=n` with
/// OS-assigned ports, eagerly pre-connected so that handshake cost stays
/// out of any section measured afterwards.
pub fn loopback_mesh(n: u32) -> Result<Vec<(NodeId, TcpTransport)>, TransportError> {
    let mut transports = Vec::with_capacity(n as usize);
    for i in 1..=n {
        let mut cfg = TcpConfig::new(NodeId::new(i), "127.0.0.1:0");
        cfg.connect_retries = 20;
        transports.push(TcpTransport::bind(cfg)?);
    }
    let table: BTreeMap<NodeId, String> = transports
        .iter()
        .map(|t| (t.node_id(), t.local_addr().to_string()))
        .collect();
    for t in &mut transports {
        let mut peers = table.clone();
        peers.remove(&t.node_id());
        t.set_peers(peers);
        t.connect_all()?;
    }
    Ok(transports.into_iter().map(|t| (t.node_id(), t)).collect())
}

/// Parses a peer address table: one `<nodeId> <host>:<port>` line per peer.
/// Blank lines and `#` comments are allowed.
pub fn parse_peer_table(text: &str) -> Result<BTreeMap<NodeId, String>, PeerTableError> {
    let mut peers = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let (id, addr) = line
            .split_once(char::is_whitespace)
            .ok_or(PeerTableError::BadLine { line: lineno })?;
        let id = match id.parse::<u32>() {
            Ok(v) if v >= 1 => NodeId::new(v),
            _ => return Err(PeerTableError::BadLine { line: lineno }),
        };
        let addr = addr.trim();
        if addr.is_empty() || peers.insert(id, addr.to_string()).is_some() {
            return Err(PeerTableError::BadLine { line: lineno });
        }
    }
    Ok(peers)
}

pub fn format_peer_table(peers: &BTreeMap<NodeId, String>) -> String {
    let mut out = String::new();
    for (id, addr) in peers {
        out.push_str(&format!("{id} {addr}\n"));
    }
    out
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum PeerTableError {
    #[error("line {line}: expected '<nodeId> <host>:<port>'")]
    BadLine { line: usize },
}
