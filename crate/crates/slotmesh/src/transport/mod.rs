//! Reliable-link layer beneath the protocol.
//!
//! Two implementations share the [`Transport`] contract: [`sim`] is an
//! in-process mesh with controllable delivery ordering for tests, [`tcp`]
//! carries length-prefixed frames over one TCP connection per directed
//! link. Both demultiplex all inbound peers into a single receive queue and
//! guarantee per-sender FIFO delivery; sends never block on the receiver's
//! progress.

use std::io;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::protocol::WireMessage;
use crate::NodeId;

pub mod sim;
pub mod tcp;
pub mod wire;

pub use sim::{sim_create, DeliveryPolicy, SimHandle, SimNetwork};
pub use tcp::{TcpConfig, TcpTransport};

/// Default cap on a single message payload.
pub const DEFAULT_FRAME_LIMIT: usize = 1 << 20; // 1 MiB

#[derive(Debug, Error)]
pub enum TransportError {
    /// All inbound links are closed and the inbox is empty, or the channel
    /// was shut down locally.
    #[error("transport closed")]
    Closed,
    /// A bounded receive expired before any message arrived.
    #[error("receive timed out")]
    Timeout,
    #[error("payload of {actual} bytes exceeds the frame limit of {limit} bytes")]
    FrameTooLarge { actual: usize, limit: usize },
    #[error("no route to node {0}")]
    UnknownPeer(NodeId),
    #[error("malformed frame: {0}")]
    MalformedFrame(&'static str),
    #[error("bind failed on {addr}: {source}")]
    BindFailed { addr: String, source: io::Error },
    #[error("connect to {addr} refused: {source}")]
    ConnectRefused { addr: String, source: io::Error },
    #[error("i/o on link to node {peer}: {source}")]
    LinkIo { peer: NodeId, source: io::Error },
}

/// One node's attachment to the network: send to any peer by id, receive
/// from all peers through a single inbox.
///
/// A handle is owned by exactly one endpoint. Sends are asynchronous; only
/// receives block.
pub trait Transport {
    /// Enqueues a message for delivery to `to`. Never blocks on the
    /// receiver's progress. The payload size is checked against the frame
    /// limit before anything is written.
    fn send(&mut self, to: NodeId, msg: WireMessage) -> Result<(), TransportError>;

    /// Blocks until a message from any peer is available.
    fn recv(&mut self) -> Result<WireMessage, TransportError>;

    /// Like [`Transport::recv`] but gives up after `timeout`.
    fn recv_timeout(&mut self, timeout: Duration) -> Result<WireMessage, TransportError>;
}

#[derive(Debug, Default)]
struct CounterCells {
    sends: AtomicU64,
    recvs: AtomicU64,
}

/// Cloneable view of an [`InstrumentedTransport`]'s counters. Stays usable
/// after the transport moves into an endpoint.
#[derive(Debug, Clone, Default)]
pub struct TransportCounters(Arc<CounterCells>);

impl TransportCounters {
    /// Messages successfully handed to the transport.
    pub fn sends(&self) -> u64 {
        self.0.sends.load(Ordering::SeqCst)
    }

    /// Messages successfully received from the inbox.
    pub fn recvs(&self) -> u64 {
        self.0.recvs.load(Ordering::SeqCst)
    }
}

/// Wraps any transport and counts successful sends and receives.
#[derive(Debug)]
pub struct InstrumentedTransport<T> {
    inner: T,
    counters: TransportCounters,
}

impl<T> InstrumentedTransport<T> {
    pub fn new(inner: T) -> Self {
        InstrumentedTransport {
            inner,
            counters: TransportCounters::default(),
        }
    }

    pub fn counters(&self) -> TransportCounters {
        self.counters.clone()
    }
}

impl<T: Transport> Transport for InstrumentedTransport<T> {
    fn send(&mut self, to: NodeId, msg: WireMessage) -> Result<(), TransportError> {
        self.inner.send(to, msg)?;
        self.counters.0.sends.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }

    fn recv(&mut self) -> Result<WireMessage, TransportError> {
        let msg = self.inner.recv()?;
        self.counters.0.recvs.fetch_add(1, Ordering::SeqCst);
        Ok(msg)
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<WireMessage, TransportError> {
        let msg = self.inner.recv_timeout(timeout)?;
        self.counters.0.recvs.fetch_add(1, Ordering::SeqCst);
        Ok(msg)
    }
}
