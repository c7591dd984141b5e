//! In-process simulated mesh with controllable delivery ordering.
//!
//! Every node gets a mailbox fed by all other nodes. Messages from one
//! sender are always delivered in send order (modelling one reliable
//! connection per directed link); the [`DeliveryPolicy`] decides how
//! *different* senders' pending messages interleave, which is exactly the
//! freedom a real network has. There is no loss, duplication or corruption.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::protocol::WireMessage;
use crate::transport::{Transport, TransportError, DEFAULT_FRAME_LIMIT};
use crate::NodeId;

/// How a mailbox interleaves pending messages from different senders.
#[derive(Debug, Clone)]
pub enum DeliveryPolicy {
    /// Global arrival order.
    Fifo,
    /// Uniformly random choice among senders with pending messages, drawn
    /// from a per-receiver generator seeded from `seed`. Single-threaded
    /// driving with a fixed seed reproduces identical inbox sequences.
    Interleave { seed: u64 },
    /// Per-receiver sender order, forced. Each entry releases one message
    /// from that sender; receives block until the scripted sender has a
    /// message pending. After the script runs out (or for receivers without
    /// one) delivery falls back to arrival order.
    Scripted {
        orders: BTreeMap<NodeId, Vec<NodeId>>,
    },
}

enum PolicyState {
    Fifo,
    Interleave(Box<ChaCha8Rng>),
    Scripted { order: Vec<NodeId>, pos: usize },
}

struct MailboxState {
    /// Per-link FIFO queues, keyed by the sending handle's node id.
    by_sender: BTreeMap<NodeId, VecDeque<WireMessage>>,
    /// Sending-handle ids in global arrival order.
    arrival: VecDeque<NodeId>,
    policy: PolicyState,
    /// Other handles still alive; when this hits zero and the queues are
    /// drained, receives report [`TransportError::Closed`].
    live_peers: usize,
    receiver_alive: bool,
}

impl MailboxState {
    fn pop(&mut self) -> Option<WireMessage> {
        let sender = match &mut self.policy {
            PolicyState::Fifo => *self.arrival.front()?,
            PolicyState::Interleave(rng) => {
                let candidates: Vec<NodeId> = self
                    .by_sender
                    .iter()
                    .filter(|(_, q)| !q.is_empty())
                    .map(|(&s, _)| s)
                    .collect();
                if candidates.is_empty() {
                    return None;
                }
                candidates[rng.gen_range(0..candidates.len())]
            }
            PolicyState::Scripted { order, pos } => {
                if *pos < order.len() {
                    let want = order[*pos];
                    if self.by_sender.get(&want).is_some_and(|q| !q.is_empty()) {
                        *pos += 1;
                        want
                    } else {
                        return None;
                    }
                } else {
                    *self.arrival.front()?
                }
            }
        };
        let msg = self.by_sender.get_mut(&sender)?.pop_front()?;
        if let Some(idx) = self.arrival.iter().position(|&s| s == sender) {
            self.arrival.remove(idx);
        }
        Some(msg)
    }
}

struct Mailbox {
    state: Mutex<MailboxState>,
    cv: Condvar,
}

struct SimShared {
    mailboxes: BTreeMap<NodeId, Arc<Mailbox>>,
    frame_limit: usize,
}

/// A fully connected simulated mesh. Mostly a factory; the per-node
/// [`SimHandle`]s carry all the traffic.
pub struct SimNetwork {
    shared: Arc<SimShared>,
    node_count: u32,
}

impl SimNetwork {
    pub fn node_count(&self) -> u32 {
        self.node_count
    }

    pub fn frame_limit(&self) -> usize {
        self.shared.frame_limit
    }
}

/// One node's attachment to a [`SimNetwork`].
pub struct SimHandle {
    me: NodeId,
    shared: Arc<SimShared>,
}

impl SimHandle {
    pub fn node_id(&self) -> NodeId {
        self.me
    }
}

/// Builds a fully connected simulated mesh for nodes `1..=n` and returns
/// the per-node handles in id order.
pub fn sim_create(n: u32, policy: DeliveryPolicy) -> (SimNetwork, Vec<SimHandle>) {
    sim_create_with_limit(n, policy, DEFAULT_FRAME_LIMIT)
}

pub fn sim_create_with_limit(
    n: u32,
    policy: DeliveryPolicy,
    frame_limit: usize,
) -> (SimNetwork, Vec<SimHandle>) {
    assert!(n >= 1, "a mesh needs at least one node");
    let mut mailboxes = BTreeMap::new();
    for id in 1..=n {
        let receiver = NodeId::new(id);
        let policy_state = match &policy {
            DeliveryPolicy::Fifo => PolicyState::Fifo,
            DeliveryPolicy::Interleave { seed } => {
                // Decorrelate receivers that share a seed.
                let mixed = seed.wrapping_add((id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                PolicyState::Interleave(Box::new(ChaCha8Rng::seed_from_u64(mixed)))
            }
            DeliveryPolicy::Scripted { orders } => match orders.get(&receiver) {
                Some(order) => PolicyState::Scripted {
                    order: order.clone(),
                    pos: 0,
                },
                None => PolicyState::Fifo,
            },
        };
        mailboxes.insert(
            receiver,
            Arc::new(Mailbox {
                state: Mutex::new(MailboxState {
                    by_sender: BTreeMap::new(),
                    arrival: VecDeque::new(),
                    policy: policy_state,
                    live_peers: (n - 1) as usize,
                    receiver_alive: true,
                }),
                cv: Condvar::new(),
            }),
        );
    }
    let shared = Arc::new(SimShared {
        mailboxes,
        frame_limit,
    });
    let handles = (1..=n)
        .map(|id| SimHandle {
            me: NodeId::new(id),
            shared: Arc::clone(&shared),
        })
        .collect();
    (
        SimNetwork {
            shared,
            node_count: n,
        },
        handles,
    )
}

impl Transport for SimHandle {
    fn send(&mut self, to: NodeId, msg: WireMessage) -> Result<(), TransportError> {
        if msg.payload.len() > self.shared.frame_limit {
            return Err(TransportError::FrameTooLarge {
                actual: msg.payload.len(),
                limit: self.shared.frame_limit,
            });
        }
        let mailbox = self
            .shared
            .mailboxes
            .get(&to)
            .ok_or(TransportError::UnknownPeer(to))?;
        let mut state = mailbox.state.lock().unwrap();
        if !state.receiver_alive {
            return Err(TransportError::Closed);
        }
        state.by_sender.entry(self.me).or_default().push_back(msg);
        state.arrival.push_back(self.me);
        mailbox.cv.notify_all();
        Ok(())
    }

    fn recv(&mut self) -> Result<WireMessage, TransportError> {
        let mailbox = &self.shared.mailboxes[&self.me];
        let mut state = mailbox.state.lock().unwrap();
        loop {
            if let Some(msg) = state.pop() {
                return Ok(msg);
            }
            if state.live_peers == 0 {
                return Err(TransportError::Closed);
            }
            state = mailbox.cv.wait(state).unwrap();
        }
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<WireMessage, TransportError> {
        let deadline = Instant::now() + timeout;
        let mailbox = &self.shared.mailboxes[&self.me];
        let mut state = mailbox.state.lock().unwrap();
        loop {
            if let Some(msg) = state.pop() {
                return Ok(msg);
            }
            if state.live_peers == 0 {
                return Err(TransportError::Closed);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(TransportError::Timeout);
            }
            let (guard, _) = mailbox.cv.wait_timeout(state, deadline - now).unwrap();
            state = guard;
        }
    }
}

impl Drop for SimHandle {
    fn drop(&mut self) {
        for (&id, mailbox) in &self.shared.mailboxes {
            let mut state = mailbox.state.lock().unwrap();
            if id == self.me {
                state.receiver_alive = false;
            } else {
                state.live_peers = state.live_peers.saturating_sub(1);
            }
            mailbox.cv.notify_all();
        }
    }
}
