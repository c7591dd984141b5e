//! Slot-synchronized peer data exchange for mesh and constellation nodes.
//!
//! Per discrete time slot, every participating node sends its payload to an
//! arbitrary set of peers and blocks until it has received each peer's
//! payload, tolerating peers that run ahead by buffering early messages.
//!
//! The crate is organized in layers:
//!
//! * [`relation`] — the exchange-relation algebra that defines which per-slot
//!   communication patterns are valid (symmetric, irreflexive relations and
//!   their graph view).
//! * [`schedule`] — multi-slot schedule generators (round-robin tournament,
//!   clique) and schedule validation against the relation algebra.
//! * [`transport`] — the reliable-link layer: an in-process simulated network
//!   with controllable delivery ordering, and a TCP transport with
//!   length-prefixed frames.
//! * [`protocol`] — the per-node endpoint: slot-synchronized multi-peer
//!   exchange with skip semantics and out-of-order buffering.
//! * [`bench`] — a benchmark harness that runs pairwise and multi-peer
//!   schedules across node counts and fits the scaling trend.

use std::fmt;

pub mod bench;
pub mod protocol;
pub mod relation;
pub mod schedule;
pub mod transport;

pub use protocol::{Endpoint, ProtocolError, WireMessage};
pub use relation::{ExchangeGraph, ExchangeRelation, RelationError};
pub use schedule::{ScheduleError, ScheduleViolation, SlotPlan, SlotSchedule};
pub use transport::{Transport, TransportError};

/// A discrete synchronization round. Every node's slot counter advances by
/// exactly one per round, whether it participates or skips.
pub type TimeSlot = u64;

/// Positive integer identifier of a mesh node (1..=n).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u32);

impl NodeId {
    /// Panics if `id` is zero; node ids start at 1.
    pub fn new(id: u32) -> Self {
        assert!(id >= 1, "node ids start at 1, got 0");
        NodeId(id)
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

// Debug prints like Display; the bare id is the whole story.
impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Shorthand used throughout tests and examples.
pub fn node(id: u32) -> NodeId {
    NodeId::new(id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_ids_start_at_one() {
        assert_eq!(node(1).get(), 1);
        assert_eq!(node(200).get(), 200);
    }

    #[test]
    #[should_panic]
    fn zero_node_id_rejected() {
        let _ = NodeId::new(0);
    }

    #[test]
    fn node_id_orders_by_value() {
        assert!(node(2) < node(10));
        assert_eq!(format!("{}", node(7)), "7");
        assert_eq!(format!("{:?}", node(7)), "7");
    }
}
