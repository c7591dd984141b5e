//! Multi-slot schedule generation and validation.
//!
//! A [`SlotSchedule`] assigns every node an ordered peer list per time slot;
//! a node absent from a slot skips it. Two generators cover the benchmark
//! modes: [`SlotSchedule::round_robin`] produces a tournament where every
//! unordered pair of nodes meets in exactly one slot (pairwise mode), and
//! [`SlotSchedule::clique`] packs all pairs into a single slot (multi-peer
//! mode). Validation checks each slot's induced relation against the
//! exchange algebra plus the cross-slot rules: no node may be scheduled to
//! message a node that is skipping the slot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::relation::{ExchangeRelation, RelationError};
use crate::{NodeId, TimeSlot};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("node count {0} too small; schedules need at least 2 nodes")]
    NodeCountTooSmall(u32),
    #[error("slot {0} out of range; schedule has {1} slots")]
    SlotOutOfRange(TimeSlot, usize),
    #[error(transparent)]
    Relation(#[from] RelationError),
}

/// One schedule defect, located by slot and offending pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleViolation {
    /// A node's peer list contains its own id.
    SelfPeer { slot: TimeSlot, node: NodeId },
    /// A peer id appears twice in one list.
    DuplicatePeer {
        slot: TimeSlot,
        node: NodeId,
        peer: NodeId,
    },
    /// A participant has an empty peer list; there is nothing to exchange.
    EmptyPeerList { slot: TimeSlot, node: NodeId },
    /// `from` lists `to` but `to` does not list `from` back.
    Asymmetric {
        slot: TimeSlot,
        from: NodeId,
        to: NodeId,
    },
    /// `from` would send to a node that is skipping the slot entirely.
    MessageToSkippingNode {
        slot: TimeSlot,
        from: NodeId,
        to: NodeId,
    },
    /// A referenced node id is outside 1..=node_count.
    NodeOutOfRange { slot: TimeSlot, node: NodeId },
    /// Slot indices must run 0, 1, 2, ... without gaps.
    SlotIndexGap { expected: TimeSlot, found: TimeSlot },
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ScheduleViolation::*;
        match self {
            SelfPeer { slot, node } => write!(f, "slot {slot}: node {node} lists itself"),
            DuplicatePeer { slot, node, peer } => {
                write!(f, "slot {slot}: node {node} lists peer {peer} twice")
            }
            EmptyPeerList { slot, node } => {
                write!(f, "slot {slot}: node {node} participates with no peers")
            }
            Asymmetric { slot, from, to } => {
                write!(f, "slot {slot}: {from} lists {to} but {to} does not list {from}")
            }
            MessageToSkippingNode { slot, from, to } => {
                write!(f, "slot {slot}: {from} targets {to}, which skips the slot")
            }
            NodeOutOfRange { slot, node } => {
                write!(f, "slot {slot}: node id {node} outside the schedule's range")
            }
            SlotIndexGap { expected, found } => {
                write!(f, "slot indices must be consecutive: expected {expected}, found {found}")
            }
        }
    }
}

/// The communication pattern of one time slot: each participating node's
/// ordered peer list. Nodes absent from the map skip the slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotPlan {
    slot: TimeSlot,
    peer_lists: BTreeMap<NodeId, Vec<NodeId>>,
}

impl SlotPlan {
    pub fn new(slot: TimeSlot) -> Self {
        SlotPlan {
            slot,
            peer_lists: BTreeMap::new(),
        }
    }

    pub fn slot(&self) -> TimeSlot {
        self.slot
    }

    pub fn set_peers(&mut self, node: NodeId, peers: Vec<NodeId>) {
        self.peer_lists.insert(node, peers);
    }

    /// The node's peer list for this slot, or `None` if it skips.
    pub fn peers(&self, node: NodeId) -> Option<&[NodeId]> {
        self.peer_lists.get(&node).map(|v| v.as_slice())
    }

    pub fn is_participant(&self, node: NodeId) -> bool {
        self.peer_lists.contains_key(&node)
    }

    pub fn participants(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.peer_lists.keys().copied()
    }

    pub fn peer_lists(&self) -> impl Iterator<Item = (NodeId, &[NodeId])> + '_ {
        self.peer_lists.iter().map(|(&n, v)| (n, v.as_slice()))
    }
}

/// A deterministic map of communication inside time slots for every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotSchedule {
    node_count: u32,
    slots: Vec<SlotPlan>,
}

impl SlotSchedule {
    pub fn new(node_count: u32, slots: Vec<SlotPlan>) -> Self {
        SlotSchedule { node_count, slots }
    }

    pub fn node_count(&self) -> u32 {
        self.node_count
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> impl Iterator<Item = &SlotPlan> {
        self.slots.iter()
    }

    pub fn plan(&self, t: TimeSlot) -> Result<&SlotPlan, ScheduleError> {
        self.slots
            .get(t as usize)
            .ok_or(ScheduleError::SlotOutOfRange(t, self.slots.len()))
    }

    /// Single-slot schedule where every node's peer list is all other node
    /// ids, ascending. The worst case for per-slot communication volume.
    pub fn clique(n: u32) -> Result<Self, ScheduleError> {
        if n < 2 {
            return Err(ScheduleError::NodeCountTooSmall(n));
        }
        let mut plan = SlotPlan::new(0);
        for i in 1..=n {
            let peers = (1..=n).filter(|&j| j != i).map(NodeId::new).collect();
            plan.set_peers(NodeId::new(i), peers);
        }
        Ok(SlotSchedule {
            node_count: n,
            slots: vec![plan],
        })
    }

    /// Circle-method round-robin tournament. Even `n`: `n - 1` slots, each a
    /// perfect matching. Odd `n`: `n` slots, each matching `(n - 1) / 2`
    /// pairs with exactly one node sitting the slot out (a bye, realized as
    /// a skip). Every unordered pair of nodes meets in exactly one slot.
    pub fn round_robin(n: u32) -> Result<Self, ScheduleError> {
        if n < 2 {
            return Err(ScheduleError::NodeCountTooSmall(n));
        }
        // Pad odd fields with a phantom participant (0); whoever draws it
        // gets the bye that slot.
        let mut seq: Vec<u32> = (1..=n).collect();
        if n % 2 == 1 {
            seq.push(0);
        }
        let m = seq.len();
        let mut slots = Vec::with_capacity(m - 1);
        for round in 0..m - 1 {
            let mut plan = SlotPlan::new(round as TimeSlot);
            for k in 0..m / 2 {
                let (a, b) = (seq[k], seq[m - 1 - k]);
                if a != 0 && b != 0 {
                    plan.set_peers(NodeId::new(a), vec![NodeId::new(b)]);
                    plan.set_peers(NodeId::new(b), vec![NodeId::new(a)]);
                }
            }
            slots.push(plan);
            // Keep seq[0] fixed, rotate the rest one step.
            seq[1..].rotate_right(1);
        }
        Ok(SlotSchedule {
            node_count: n,
            slots,
        })
    }

    /// Checks every slot invariant and returns all violations found. An
    /// empty result means the schedule is safe to run: every scheduled send
    /// has a matching reciprocal and never targets a skipping node.
    pub fn validate(&self) -> Vec<ScheduleViolation> {
        let mut out = Vec::new();
        for (idx, plan) in self.slots.iter().enumerate() {
            if plan.slot != idx as TimeSlot {
                out.push(ScheduleViolation::SlotIndexGap {
                    expected: idx as TimeSlot,
                    found: plan.slot,
                });
            }
            let slot = plan.slot;
            for (&owner, peers) in &plan.peer_lists {
                if owner.get() > self.node_count {
                    out.push(ScheduleViolation::NodeOutOfRange { slot, node: owner });
                }
                if peers.is_empty() {
                    out.push(ScheduleViolation::EmptyPeerList { slot, node: owner });
                }
                let mut seen = BTreeSet::new();
                for &peer in peers {
                    if peer.get() > self.node_count {
                        out.push(ScheduleViolation::NodeOutOfRange { slot, node: peer });
                    }
                    if peer == owner {
                        out.push(ScheduleViolation::SelfPeer { slot, node: owner });
                        continue;
                    }
                    if !seen.insert(peer) {
                        out.push(ScheduleViolation::DuplicatePeer {
                            slot,
                            node: owner,
                            peer,
                        });
                        continue;
                    }
                    match plan.peer_lists.get(&peer) {
                        None => out.push(ScheduleViolation::MessageToSkippingNode {
                            slot,
                            from: owner,
                            to: peer,
                        }),
                        Some(back) if !back.contains(&owner) => {
                            out.push(ScheduleViolation::Asymmetric {
                                slot,
                                from: owner,
                                to: peer,
                            })
                        }
                        Some(_) => {}
                    }
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// The exchange relation induced by slot `t`: universe is the slot's
    /// non-skipping nodes, pairs follow the peer lists.
    pub fn slot_relation(&self, t: TimeSlot) -> Result<ExchangeRelation, ScheduleError> {
        let plan = self.plan(t)?;
        let universe: Vec<NodeId> = plan.participants().collect();
        let pairs = plan
            .peer_lists
            .iter()
            .flat_map(|(&from, peers)| peers.iter().map(move |&to| (from, to)));
        Ok(ExchangeRelation::new(universe, pairs)?)
    }

    /// Text form: header `n=<count> slots=<count>`, then one
    /// `<slot>:<node>:<comma-separated peers>` line per participating node.
    pub fn to_text(&self) -> String {
        let mut out = format!("n={} slots={}\n", self.node_count, self.slots.len());
        for plan in &self.slots {
            for (&nid, peers) in &plan.peer_lists {
                let peers: Vec<String> = peers.iter().map(|p| p.to_string()).collect();
                out.push_str(&format!("{}:{}:{}\n", plan.slot, nid, peers.join(",")));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ScheduleParseError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(ScheduleParseError::BadHeader)?;
        let (node_count, slot_count) = parse_header(header)?;
        let mut slots: Vec<SlotPlan> = (0..slot_count)
            .map(|i| SlotPlan::new(i as TimeSlot))
            .collect();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let mut fields = line.splitn(3, ':');
            let (slot, nid, peers) = match (fields.next(), fields.next(), fields.next()) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => return Err(ScheduleParseError::BadLine { line: lineno }),
            };
            let slot: TimeSlot = slot
                .parse()
                .map_err(|_| ScheduleParseError::BadLine { line: lineno })?;
            let plan = slots
                .get_mut(slot as usize)
                .ok_or(ScheduleParseError::SlotOutOfRange { line: lineno })?;
            let nid = parse_node(nid, lineno)?;
            if plan.peer_lists.contains_key(&nid) {
                return Err(ScheduleParseError::DuplicateEntry { line: lineno });
            }
            let peers = peers
                .split(',')
                .map(|tok| parse_node(tok.trim(), lineno))
                .collect::<Result<Vec<_>, _>>()?;
            plan.set_peers(nid, peers);
        }
        Ok(SlotSchedule {
            node_count,
            slots,
        })
    }
}

fn parse_header(header: &str) -> Result<(u32, usize), ScheduleParseError> {
    let mut fields = header.split_whitespace();
    let n = fields
        .next()
        .and_then(|f| f.strip_prefix("n="))
        .and_then(|v| v.parse::<u32>().ok());
    let slots = fields
        .next()
        .and_then(|f| f.strip_prefix("slots="))
        .and_then(|v| v.parse::<usize>().ok());
    match (n, slots, fields.next()) {
        (Some(n), Some(slots), None) => Ok((n, slots)),
        _ => Err(ScheduleParseError::BadHeader),
    }
}

fn parse_node(tok: &str, line: usize) -> Result<NodeId, ScheduleParseError> {
    match tok.parse::<u32>() {
        Ok(id) if id >= 1 => Ok(NodeId::new(id)),
        _ => Err(ScheduleParseError::BadNodeId { line }),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleParseError {
    #[error("missing or malformed 'n=<count> slots=<count>' header")]
    BadHeader,
    #[error("line {line}: expected '<slot>:<node>:<peers>'")]
    BadLine { line: usize },
    #[error("line {line}: node ids are positive integers")]
    BadNodeId { line: usize },
    #[error("line {line}: slot index beyond the declared slot count")]
    SlotOutOfRange { line: usize },
    #[error("line {line}: duplicate (slot, node) entry")]
    DuplicateEntry { line: usize },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node;
    use std::collections::HashMap;

    /// Brute-force oracle: how often each unordered pair meets across slots.
    fn pair_meeting_counts(s: &SlotSchedule) -> HashMap<(NodeId, NodeId), usize> {
        let mut counts = HashMap::new();
        for plan in s.slots() {
            for (owner, peers) in plan.peer_lists() {
                for &peer in peers {
                    if owner < peer {
                        *counts.entry((owner, peer)).or_insert(0) += 1;
                    }
                }
            }
        }
        counts
    }

    #[test]
    fn clique_of_three() {
        let s = SlotSchedule::clique(3).unwrap();
        assert_eq!(s.slot_count(), 1);
        let plan = s.plan(0).unwrap();
        assert_eq!(plan.peers(node(1)).unwrap(), &[node(2), node(3)]);
        assert_eq!(plan.peers(node(2)).unwrap(), &[node(1), node(3)]);
        assert_eq!(plan.peers(node(3)).unwrap(), &[node(1), node(2)]);
    }

    #[test]
    fn clique_of_two_is_one_matched_pair() {
        let s = SlotSchedule::clique(2).unwrap();
        let plan = s.plan(0).unwrap();
        assert_eq!(plan.peers(node(1)).unwrap(), &[node(2)]);
        assert_eq!(plan.peers(node(2)).unwrap(), &[node(1)]);
    }

    #[test]
    fn clique_pair_count_is_n_times_n_minus_one() {
        let s = SlotSchedule::clique(4).unwrap();
        assert_eq!(s.slot_relation(0).unwrap().len(), 12);
    }

    #[test]
    fn clique_rejects_singleton() {
        assert_eq!(
            SlotSchedule::clique(1).unwrap_err(),
            ScheduleError::NodeCountTooSmall(1)
        );
    }

    #[test]
    fn round_robin_two_nodes() {
        let s = SlotSchedule::round_robin(2).unwrap();
        assert_eq!(s.slot_count(), 1);
        let plan = s.plan(0).unwrap();
        assert_eq!(plan.peers(node(1)).unwrap(), &[node(2)]);
        assert_eq!(plan.peers(node(2)).unwrap(), &[node(1)]);
    }

    #[test]
    fn round_robin_even_count_is_perfect_matchings() {
        let s = SlotSchedule::round_robin(4).unwrap();
        assert_eq!(s.slot_count(), 3);
        for plan in s.slots() {
            // Perfect matching: everyone participates, exactly one peer each.
            assert_eq!(plan.participants().count(), 4);
            for (_, peers) in plan.peer_lists() {
                assert_eq!(peers.len(), 1);
            }
        }
        let counts = pair_meeting_counts(&s);
        assert_eq!(counts.len(), 6);
        assert!(counts.values().all(|&c| c == 1));
    }

    #[test]
    fn round_robin_odd_count_has_one_bye_per_slot() {
        let s = SlotSchedule::round_robin(5).unwrap();
        assert_eq!(s.slot_count(), 5);
        let mut byes = Vec::new();
        for plan in s.slots() {
            assert_eq!(plan.participants().count(), 4);
            for i in 1..=5 {
                if !plan.is_participant(node(i)) {
                    byes.push(node(i));
                }
            }
        }
        // Every node sits out exactly once.
        byes.sort();
        assert_eq!(byes, vec![node(1), node(2), node(3), node(4), node(5)]);
        let counts = pair_meeting_counts(&s);
        assert_eq!(counts.len(), 10);
        assert!(counts.values().all(|&c| c == 1));
    }

    #[test]
    fn round_robin_covers_every_pair_exactly_once() {
        for n in 2..=32 {
            let s = SlotSchedule::round_robin(n).unwrap();
            let expected_slots = if n % 2 == 0 { n - 1 } else { n } as usize;
            assert_eq!(s.slot_count(), expected_slots, "n={n}");
            let counts = pair_meeting_counts(&s);
            assert_eq!(counts.len(), (n * (n - 1) / 2) as usize, "n={n}");
            assert!(counts.values().all(|&c| c == 1), "n={n}");
        }
    }

    #[test]
    fn generators_produce_valid_schedules() {
        for n in 2..=32 {
            assert!(SlotSchedule::clique(n).unwrap().is_valid(), "clique {n}");
            assert!(
                SlotSchedule::round_robin(n).unwrap().is_valid(),
                "round robin {n}"
            );
        }
    }

    #[test]
    fn slot_relations_of_valid_schedules_are_valid_exchanges() {
        for n in [2, 3, 4, 7, 8] {
            for s in [
                SlotSchedule::clique(n).unwrap(),
                SlotSchedule::round_robin(n).unwrap(),
            ] {
                for t in 0..s.slot_count() {
                    assert!(s.slot_relation(t as TimeSlot).unwrap().is_valid());
                }
            }
        }
    }

    #[test]
    fn clique_slot_relation_is_the_full_pattern() {
        let r = SlotSchedule::clique(3).unwrap().slot_relation(0).unwrap();
        assert_eq!(r.len(), 6);
        assert!(r.is_valid());
        // Same shape as the all-pairs three-node relation.
        for a in 1..=3u32 {
            for b in 1..=3u32 {
                assert_eq!(r.contains(node(a), node(b)), a != b);
            }
        }
    }

    #[test]
    fn pairwise_slot_relation_is_one_symmetric_pair() {
        let r = SlotSchedule::round_robin(2)
            .unwrap()
            .slot_relation(0)
            .unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.contains(node(1), node(2)) && r.contains(node(2), node(1)));
    }

    #[test]
    fn slot_relation_out_of_range() {
        let s = SlotSchedule::clique(3).unwrap();
        assert_eq!(
            s.slot_relation(1).unwrap_err(),
            ScheduleError::SlotOutOfRange(1, 1)
        );
    }

    #[test]
    fn validate_flags_asymmetric_pair() {
        let mut plan = SlotPlan::new(0);
        plan.set_peers(node(1), vec![node(2)]);
        plan.set_peers(node(2), vec![]);
        let s = SlotSchedule::new(2, vec![plan]);
        let violations = s.validate();
        assert!(violations.contains(&ScheduleViolation::Asymmetric {
            slot: 0,
            from: node(1),
            to: node(2)
        }));
        assert!(violations.contains(&ScheduleViolation::EmptyPeerList {
            slot: 0,
            node: node(2)
        }));
    }

    #[test]
    fn validate_flags_message_to_skipping_node() {
        let mut plan = SlotPlan::new(0);
        plan.set_peers(node(1), vec![node(2)]);
        let s = SlotSchedule::new(2, vec![plan]);
        assert_eq!(
            s.validate(),
            vec![ScheduleViolation::MessageToSkippingNode {
                slot: 0,
                from: node(1),
                to: node(2)
            }]
        );
    }

    #[test]
    fn validate_flags_self_and_duplicate_peers() {
        let mut plan = SlotPlan::new(0);
        plan.set_peers(node(1), vec![node(1), node(2), node(2)]);
        plan.set_peers(node(2), vec![node(1)]);
        let s = SlotSchedule::new(2, vec![plan]);
        let violations = s.validate();
        assert!(violations.contains(&ScheduleViolation::SelfPeer {
            slot: 0,
            node: node(1)
        }));
        assert!(violations.contains(&ScheduleViolation::DuplicatePeer {
            slot: 0,
            node: node(1),
            peer: node(2)
        }));
    }

    #[test]
    fn validate_flags_gaps_and_out_of_range_ids() {
        let mut plan = SlotPlan::new(1); // should be 0
        plan.set_peers(node(1), vec![node(9)]);
        plan.set_peers(node(9), vec![node(1)]);
        let s = SlotSchedule::new(2, vec![plan]);
        let violations = s.validate();
        assert!(violations.contains(&ScheduleViolation::SlotIndexGap {
            expected: 0,
            found: 1
        }));
        assert!(violations.contains(&ScheduleViolation::NodeOutOfRange {
            slot: 1,
            node: node(9)
        }));
    }

    #[test]
    fn text_round_trip() {
        for s in [
            SlotSchedule::clique(4).unwrap(),
            SlotSchedule::round_robin(5).unwrap(),
            SlotSchedule::round_robin(2).unwrap(),
        ] {
            let parsed = SlotSchedule::from_text(&s.to_text()).unwrap();
            assert_eq!(parsed, s);
        }
    }

    #[test]
    fn text_format_is_stable() {
        let s = SlotSchedule::round_robin(2).unwrap();
        assert_eq!(s.to_text(), "n=2 slots=1\n0:1:2\n0:2:1\n");
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert_eq!(
            SlotSchedule::from_text("bogus"),
            Err(ScheduleParseError::BadHeader)
        );
        assert_eq!(
            SlotSchedule::from_text("n=2 slots=1\n0:1"),
            Err(ScheduleParseError::BadLine { line: 2 })
        );
        assert_eq!(
            SlotSchedule::from_text("n=2 slots=1\n5:1:2"),
            Err(ScheduleParseError::SlotOutOfRange { line: 2 })
        );
        assert_eq!(
            SlotSchedule::from_text("n=2 slots=1\n0:1:2\n0:1:2"),
            Err(ScheduleParseError::DuplicateEntry { line: 3 })
        );
    }
}
