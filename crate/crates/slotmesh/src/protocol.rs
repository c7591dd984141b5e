//! Per-node protocol endpoint: slot-synchronized multi-peer exchange.
//!
//! An [`Endpoint`] advances through discrete time slots. In each slot it
//! either exchanges payloads with an arbitrary peer set — send to every
//! peer, then block until every peer's payload for this slot has arrived —
//! or skips (payload absent), which only advances the slot counter.
//!
//! Peers may run ahead: a fast peer's messages for future slots can arrive
//! while this node is still collecting the current slot, and a current-slot
//! message can arrive from a peer later in the list than the one currently
//! awaited. Both land in the [`SlotBuffer`], keyed by `(slot, sender)`, and
//! are consumed when their turn comes. Returned payloads align positionally
//! with the peer list.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Duration;

use thiserror::Error;

use crate::schedule::SlotSchedule;
use crate::transport::{Transport, TransportError};
use crate::{NodeId, TimeSlot};

/// The triple carried by the transport for one (slot, sender).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub slot: TimeSlot,
    pub sender: NodeId,
    pub payload: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("peer list contains this node's own id {0}")]
    SelfInPeerList(NodeId),
    #[error("peer list contains duplicate id {0}")]
    DuplicatePeerId(NodeId),
    #[error("exchange with a payload needs at least one peer")]
    EmptyPeerList,
    /// Two messages arrived for the same `(slot, sender)` key: the peer is
    /// violating the protocol, so this is a hard error rather than a
    /// silent overwrite.
    #[error("duplicate buffered message for slot {slot} from node {sender}")]
    DuplicateBufferedMessage { slot: TimeSlot, sender: NodeId },
    #[error("timed out waiting for slot {slot} payload from node {peer}")]
    ReceiveTimeout { slot: TimeSlot, peer: NodeId },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// An exchange failure with the slot it happened in.
#[derive(Debug, Error)]
#[error("node {node}, slot {slot}: {source}")]
pub struct SlotError {
    pub node: NodeId,
    pub slot: TimeSlot,
    pub source: ProtocolError,
}

/// Holds messages that arrived before their turn: future-slot messages from
/// fast peers, and current-slot messages from peers later in the peer list
/// than the one currently awaited.
#[derive(Debug, Default)]
pub struct SlotBuffer {
    entries: HashMap<(TimeSlot, NodeId), WireMessage>,
}

impl SlotBuffer {
    pub fn new() -> Self {
        SlotBuffer::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Removes and returns the message for `(slot, sender)`, if buffered.
    pub fn take(&mut self, slot: TimeSlot, sender: NodeId) -> Option<WireMessage> {
        self.entries.remove(&(slot, sender))
    }

    /// Stores a message under its own `(slot, sender)` key.
    pub fn stash(&mut self, msg: WireMessage) -> Result<(), ProtocolError> {
        let key = (msg.slot, msg.sender);
        if self.entries.contains_key(&key) {
            return Err(ProtocolError::DuplicateBufferedMessage {
                slot: msg.slot,
                sender: msg.sender,
            });
        }
        self.entries.insert(key, msg);
        Ok(())
    }
}

/// One node's protocol endpoint. Owned by exactly one execution context;
/// distinct endpoints run concurrently and meet only at the transport.
pub struct Endpoint<T> {
    node_id: NodeId,
    time_slot: TimeSlot,
    buffer: SlotBuffer,
    transport: T,
    watchdog: Option<Duration>,
    buffer_high_water: Option<usize>,
    high_water_hit: bool,
}

impl<T: Transport> Endpoint<T> {
    pub fn new(node_id: NodeId, transport: T) -> Self {
        Endpoint {
            node_id,
            time_slot: 0,
            buffer: SlotBuffer::new(),
            transport,
            watchdog: None,
            buffer_high_water: None,
            high_water_hit: false,
        }
    }

    /// Converts an indefinitely blocked receive into
    /// [`ProtocolError::ReceiveTimeout`] after `timeout`. Off by default:
    /// the faithful semantics block until the peer's message arrives.
    pub fn with_watchdog(mut self, timeout: Duration) -> Self {
        self.watchdog = Some(timeout);
        self
    }

    /// Logs a warning the first time the slot buffer grows past `mark`.
    /// The buffer itself stays unbounded; bounding it would change how far
    /// ahead fast peers may run.
    pub fn with_buffer_high_water(mut self, mark: usize) -> Self {
        self.buffer_high_water = Some(mark);
        self
    }

    pub fn node_id(&self) -> NodeId {
        self.node_id
    }

    /// Current time slot; starts at 0 and advances by exactly one per
    /// exchange call, skips included.
    pub fn time_slot(&self) -> TimeSlot {
        self.time_slot
    }

    /// Number of messages currently parked in the slot buffer.
    pub fn buffer_size(&self) -> usize {
        self.buffer.len()
    }

    /// One slot's exchange. With `payload` absent the node skips: nothing
    /// is sent or received and the slot counter still advances. Otherwise
    /// the payload goes out to every peer in `peer_ids` order, then the
    /// call blocks until each peer's current-slot payload is in hand,
    /// stashing every non-matching arrival. The returned payloads align
    /// positionally with `peer_ids`.
    ///
    /// Every peer listed must also list this node for the same slot —
    /// that is the schedule validator's job, not a runtime check here.
    pub fn exchange(
        &mut self,
        peer_ids: &[NodeId],
        payload: Option<&[u8]>,
    ) -> Result<Option<Vec<Vec<u8>>>, ProtocolError> {
        let payload = match payload {
            None => {
                self.time_slot += 1;
                return Ok(None);
            }
            Some(p) => p,
        };
        self.check_peer_list(peer_ids)?;

        let slot = self.time_slot;
        for &peer in peer_ids {
            self.transport.send(
                peer,
                WireMessage {
                    slot,
                    sender: self.node_id,
                    payload: payload.to_vec(),
                },
            )?;
        }

        let mut received = Vec::with_capacity(peer_ids.len());
        for &peer in peer_ids {
            let msg = match self.buffer.take(slot, peer) {
                Some(msg) => msg,
                None => loop {
                    let msg = self.recv_one(slot, peer)?;
                    if msg.slot == slot && msg.sender == peer {
                        break msg;
                    }
                    self.stash(msg)?;
                },
            };
            received.push(msg.payload);
        }
        self.time_slot += 1;
        Ok(Some(received))
    }

    /// Single-peer exchange; equivalent to `exchange(&[peer], Some(payload))`
    /// unwrapped to the one received payload.
    pub fn exchange_pairwise(
        &mut self,
        peer: NodeId,
        payload: &[u8],
    ) -> Result<Vec<u8>, ProtocolError> {
        let mut payloads = self
            .exchange(&[peer], Some(payload))?
            .expect("payload was present, exchange cannot skip");
        Ok(payloads.pop().expect("one peer, one payload"))
    }

    /// Drives this endpoint through every slot of `schedule`, exchanging
    /// where it has a peer list and skipping where it does not. Returns the
    /// received payload lists keyed by slot, non-skipped slots only.
    ///
    /// The schedule is expected to have passed validation and the endpoint
    /// must be fresh (slot 0).
    pub fn run_schedule<F>(
        &mut self,
        schedule: &SlotSchedule,
        mut payload_for: F,
    ) -> Result<BTreeMap<TimeSlot, Vec<Vec<u8>>>, SlotError>
    where
        F: FnMut(TimeSlot) -> Vec<u8>,
    {
        assert_eq!(self.time_slot, 0, "run_schedule requires a fresh endpoint");
        let mut results = BTreeMap::new();
        for plan in schedule.slots() {
            let slot = plan.slot();
            match plan.peers(self.node_id) {
                Some(peers) => {
                    let payload = payload_for(slot);
                    match self.exchange(peers, Some(&payload)) {
                        Ok(Some(payloads)) => {
                            results.insert(slot, payloads);
                        }
                        Ok(None) => unreachable!("payload was present"),
                        Err(source) => {
                            return Err(SlotError {
                                node: self.node_id,
                                slot,
                                source,
                            })
                        }
                    }
                }
                None => match self.exchange(&[], None) {
                    Ok(_) => {}
                    Err(source) => {
                        return Err(SlotError {
                            node: self.node_id,
                            slot,
                            source,
                        })
                    }
                },
            }
        }
        Ok(results)
    }

    fn check_peer_list(&self, peer_ids: &[NodeId]) -> Result<(), ProtocolError> {
        if peer_ids.is_empty() {
            return Err(ProtocolError::EmptyPeerList);
        }
        let mut seen = BTreeSet::new();
        for &peer in peer_ids {
            if peer == self.node_id {
                return Err(ProtocolError::SelfInPeerList(peer));
            }
            if !seen.insert(peer) {
                return Err(ProtocolError::DuplicatePeerId(peer));
            }
        }
        Ok(())
    }

    fn recv_one(&mut self, slot: TimeSlot, peer: NodeId) -> Result<WireMessage, ProtocolError> {
        match self.watchdog {
            None => Ok(self.transport.recv()?),
            Some(timeout) => match self.transport.recv_timeout(timeout) {
                Ok(msg) => Ok(msg),
                Err(TransportError::Timeout) => {
                    Err(ProtocolError::ReceiveTimeout { slot, peer })
                }
                Err(e) => Err(e.into()),
            },
        }
    }

    fn stash(&mut self, msg: WireMessage) -> Result<(), ProtocolError> {
        self.buffer.stash(msg)?;
        if let Some(mark) = self.buffer_high_water {
            if !self.high_water_hit && self.buffer.len() > mark {
                self.high_water_hit = true;
                log::warn!(
                    "node {}: slot buffer grew past high-water mark ({} > {mark})",
                    self.node_id,
                    self.buffer.len()
                );
            }
        }
        Ok(())
    }
}
