//! Exchange-relation algebra on a set of nodes.
//!
//! An [`ExchangeRelation`] is a finite set of ordered node pairs over an
//! explicit universe; `(a, b)` means "a sends its data to b". A pattern is a
//! valid per-slot exchange exactly when the relation is irreflexive and
//! symmetric: every send has a matching reciprocal send. Valid relations are
//! their own inverse and their own symmetric closure, and admit an undirected
//! graph view ([`ExchangeGraph`]) with one edge per symmetric pair.
//!
//! Composition of two exchange relations captures data propagation across
//! slots: `(x, y)` is in `r ∘ s` when some `z` relays between them.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::NodeId;

/// Why a relation fails to be a valid exchange pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangeViolation {
    /// A node is paired with itself.
    Reflexive(NodeId),
    /// `(from, to)` is present but `(to, from)` is not.
    MissingReciprocal { from: NodeId, to: NodeId },
}

impl fmt::Display for ExchangeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExchangeViolation::Reflexive(n) => write!(f, "reflexive pair ({n}, {n})"),
            ExchangeViolation::MissingReciprocal { from, to } => {
                write!(f, "pair ({from}, {to}) has no reciprocal ({to}, {from})")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelationError {
    #[error("pair ({0}, {1}) references a node outside the universe")]
    EndpointOutsideUniverse(NodeId, NodeId),
    #[error("relations are over different universes")]
    UniverseMismatch,
    #[error("not a valid exchange relation: {0}")]
    InvalidExchange(ExchangeViolation),
}

/// A finite set of ordered node pairs over an explicit universe.
///
/// The universe is explicit rather than inferred from the pairs so that
/// isolated participants (nodes with no pairs this slot) are representable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExchangeRelation {
    universe: BTreeSet<NodeId>,
    pairs: BTreeSet<(NodeId, NodeId)>,
}

impl ExchangeRelation {
    /// Builds a relation, deduplicating pairs (set semantics). Rejects pairs
    /// whose endpoints are outside the universe.
    pub fn new(
        universe: impl IntoIterator<Item = NodeId>,
        pairs: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, RelationError> {
        let universe: BTreeSet<NodeId> = universe.into_iter().collect();
        let mut deduped = BTreeSet::new();
        for (from, to) in pairs {
            if !universe.contains(&from) || !universe.contains(&to) {
                return Err(RelationError::EndpointOutsideUniverse(from, to));
            }
            deduped.insert((from, to));
        }
        Ok(ExchangeRelation {
            universe,
            pairs: deduped,
        })
    }

    /// The empty relation over the given universe.
    pub fn empty(universe: impl IntoIterator<Item = NodeId>) -> Self {
        ExchangeRelation {
            universe: universe.into_iter().collect(),
            pairs: BTreeSet::new(),
        }
    }

    pub fn universe(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.universe.iter().copied()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn contains(&self, from: NodeId, to: NodeId) -> bool {
        self.pairs.contains(&(from, to))
    }

    /// Number of ordered pairs.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The relation with every pair reversed, over the same universe.
    pub fn inverse(&self) -> Self {
        ExchangeRelation {
            universe: self.universe.clone(),
            pairs: self.pairs.iter().map(|&(a, b)| (b, a)).collect(),
        }
    }

    /// Composition `self ∘ other`: `(x, y)` is included when there is a `z`
    /// with `(x, z)` in `self` and `(z, y)` in `other`. The left relation is
    /// applied first, so composing two adjacent slot patterns shows where
    /// data can propagate over the intermediate node.
    pub fn compose(&self, other: &Self) -> Result<Self, RelationError> {
        if self.universe != other.universe {
            return Err(RelationError::UniverseMismatch);
        }
        let mut pairs = BTreeSet::new();
        for &(x, z) in &self.pairs {
            for &(z2, y) in &other.pairs {
                if z == z2 {
                    pairs.insert((x, y));
                }
            }
        }
        Ok(ExchangeRelation {
            universe: self.universe.clone(),
            pairs,
        })
    }

    /// Set union of pairs; universes must match.
    pub fn union(&self, other: &Self) -> Result<Self, RelationError> {
        if self.universe != other.universe {
            return Err(RelationError::UniverseMismatch);
        }
        Ok(ExchangeRelation {
            universe: self.universe.clone(),
            pairs: self.pairs.union(&other.pairs).copied().collect(),
        })
    }

    /// A relation is a valid exchange pattern iff it is irreflexive and
    /// symmetric. Returns the first violating pair in pair order.
    pub fn check_valid(&self) -> Result<(), ExchangeViolation> {
        for &(from, to) in &self.pairs {
            if from == to {
                return Err(ExchangeViolation::Reflexive(from));
            }
            if !self.pairs.contains(&(to, from)) {
                return Err(ExchangeViolation::MissingReciprocal { from, to });
            }
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.check_valid().is_ok()
    }

    /// `self ∪ inverse(self)`. A valid exchange relation is its own
    /// symmetric closure.
    pub fn symmetric_closure(&self) -> Self {
        ExchangeRelation {
            universe: self.universe.clone(),
            pairs: self
                .pairs
                .iter()
                .flat_map(|&(a, b)| [(a, b), (b, a)])
                .collect(),
        }
    }

    /// True iff for all `(x, z)` and `(z, y)` in the relation, `(x, y)` is
    /// too. Valid exchange relations are generally not transitive: `(a, b)`
    /// and `(b, a)` would force the reflexive `(a, a)`.
    pub fn is_transitive(&self) -> bool {
        for &(x, z) in &self.pairs {
            for &(z2, y) in &self.pairs {
                if z == z2 && !self.pairs.contains(&(x, y)) {
                    return false;
                }
            }
        }
        true
    }

    /// Undirected graph view: one edge `{x, y}` per symmetric pair, vertices
    /// equal to the universe. Requires a valid exchange relation.
    pub fn to_graph(&self) -> Result<ExchangeGraph, RelationError> {
        self.check_valid().map_err(RelationError::InvalidExchange)?;
        let edges = self
            .pairs
            .iter()
            .map(|&(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        Ok(ExchangeGraph {
            vertices: self.universe.clone(),
            edges,
        })
    }

    /// All peers of `x`, ascending by id. Requires a valid exchange relation;
    /// a node with no pairs (or outside the universe) has no peers.
    pub fn peers_of(&self, x: NodeId) -> Result<Vec<NodeId>, RelationError> {
        self.check_valid().map_err(RelationError::InvalidExchange)?;
        Ok(self
            .pairs
            .iter()
            .filter(|&&(from, _)| from == x)
            .map(|&(_, to)| to)
            .collect())
    }

    /// Text form: a `universe:` header line, then one `from,to` line per
    /// ordered pair.
    pub fn to_text(&self) -> String {
        let mut out = String::from("universe:");
        for n in &self.universe {
            out.push(' ');
            out.push_str(&n.to_string());
        }
        out.push('\n');
        for &(from, to) in &self.pairs {
            out.push_str(&format!("{from},{to}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, RelationParseError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or(RelationParseError::MissingHeader)?;
        let rest = header
            .strip_prefix("universe:")
            .ok_or(RelationParseError::MissingHeader)?;
        let mut universe = BTreeSet::new();
        for tok in rest.split_whitespace() {
            universe.insert(parse_node(tok, 1)?);
        }
        let mut pairs = BTreeSet::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let (a, b) = line
                .split_once(',')
                .ok_or(RelationParseError::BadPair { line: lineno })?;
            let from = parse_node(a.trim(), lineno)?;
            let to = parse_node(b.trim(), lineno)?;
            if !universe.contains(&from) || !universe.contains(&to) {
                return Err(RelationParseError::OutsideUniverse { line: lineno });
            }
            pairs.insert((from, to));
        }
        Ok(ExchangeRelation { universe, pairs })
    }
}

fn parse_node(tok: &str, line: usize) -> Result<NodeId, RelationParseError> {
    match tok.parse::<u32>() {
        Ok(id) if id >= 1 => Ok(NodeId::new(id)),
        _ => Err(RelationParseError::BadNodeId { line }),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelationParseError {
    #[error("missing 'universe:' header line")]
    MissingHeader,
    #[error("line {line}: expected 'from,to'")]
    BadPair { line: usize },
    #[error("line {line}: node ids are positive integers")]
    BadNodeId { line: usize },
    #[error("line {line}: pair endpoint outside the universe")]
    OutsideUniverse { line: usize },
}

/// Undirected graph view of a valid exchange relation. Edges are stored as
/// `(min, max)` node pairs; there are no self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExchangeGraph {
    vertices: BTreeSet<NodeId>,
    edges: BTreeSet<(NodeId, NodeId)>,
}

impl ExchangeGraph {
    pub fn vertices(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.vertices.iter().copied()
    }

    /// Edges as normalized `(min, max)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        let e = if a < b { (a, b) } else { (b, a) };
        self.edges.contains(&e)
    }

    /// Expands every edge `{x, y}` back into the ordered pairs `(x, y)` and
    /// `(y, x)`; inverse of [`ExchangeRelation::to_graph`].
    pub fn to_relation(&self) -> ExchangeRelation {
        ExchangeRelation {
            universe: self.vertices.clone(),
            pairs: self
                .edges
                .iter()
                .flat_map(|&(a, b)| [(a, b), (b, a)])
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node;

    // The worked three-node examples: a=1, b=2, c=3.
    fn abc() -> Vec<NodeId> {
        vec![node(1), node(2), node(3)]
    }

    fn rel(universe: &[u32], pairs: &[(u32, u32)]) -> ExchangeRelation {
        ExchangeRelation::new(
            universe.iter().map(|&i| node(i)),
            pairs.iter().map(|&(a, b)| (node(a), node(b))),
        )
        .unwrap()
    }

    fn r1() -> ExchangeRelation {
        rel(&[1, 2], &[(1, 2), (2, 1)])
    }

    fn r2() -> ExchangeRelation {
        rel(&[1, 2, 3], &[(1, 2), (2, 1), (2, 3), (3, 2)])
    }

    fn r3() -> ExchangeRelation {
        rel(&[1, 2, 3], &[(1, 2), (2, 1), (1, 3), (3, 1), (2, 3), (3, 2)])
    }

    #[test]
    fn build_deduplicates_pairs() {
        let r = rel(&[1, 2], &[(1, 2), (1, 2)]);
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn build_rejects_endpoint_outside_universe() {
        let err = ExchangeRelation::new([node(1)], [(node(1), node(2))]).unwrap_err();
        assert_eq!(
            err,
            RelationError::EndpointOutsideUniverse(node(1), node(2))
        );
    }

    #[test]
    fn empty_relation_over_singleton_universe() {
        let r = ExchangeRelation::new([node(1)], []).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.universe().count(), 1);
    }

    #[test]
    fn inverse_of_symmetric_relation_is_itself() {
        assert_eq!(r1().inverse(), r1());
        assert_eq!(r2().inverse(), r2());
    }

    #[test]
    fn inverse_of_empty_is_empty() {
        let e = ExchangeRelation::empty(abc());
        assert_eq!(e.inverse(), e);
    }

    #[test]
    fn inverse_reverses_asymmetric_pair() {
        let r = rel(&[1, 2], &[(1, 2)]);
        assert_eq!(r.inverse(), rel(&[1, 2], &[(2, 1)]));
    }

    #[test]
    fn composition_propagates_over_the_shared_node() {
        // R21 = {(a,b),(b,a)}, R22 = {(b,c),(c,b)} on {a,b,c}.
        let r21 = rel(&[1, 2, 3], &[(1, 2), (2, 1)]);
        let r22 = rel(&[1, 2, 3], &[(2, 3), (3, 2)]);
        assert_eq!(r21.compose(&r22).unwrap(), rel(&[1, 2, 3], &[(1, 3)]));
        assert_eq!(r22.compose(&r21).unwrap(), rel(&[1, 2, 3], &[(3, 1)]));
    }

    #[test]
    fn compose_with_empty_annihilates() {
        let e = ExchangeRelation::empty(abc());
        assert!(r2().compose(&e).unwrap().is_empty());
        assert!(e.compose(&r2()).unwrap().is_empty());
    }

    #[test]
    fn compose_requires_shared_universe() {
        let err = r1().compose(&r2()).unwrap_err();
        assert_eq!(err, RelationError::UniverseMismatch);
    }

    #[test]
    fn union_of_propagation_compositions_is_valid() {
        let r21 = rel(&[1, 2, 3], &[(1, 2), (2, 1)]);
        let r22 = rel(&[1, 2, 3], &[(2, 3), (3, 2)]);
        let r23 = r21
            .compose(&r22)
            .unwrap()
            .union(&r22.compose(&r21).unwrap())
            .unwrap();
        assert_eq!(r23, rel(&[1, 2, 3], &[(1, 3), (3, 1)]));
        assert!(r23.is_valid());
    }

    #[test]
    fn union_builds_r2_from_its_halves() {
        let left = rel(&[1, 2, 3], &[(1, 2), (2, 1)]);
        let right = rel(&[1, 2, 3], &[(2, 3), (3, 2)]);
        assert_eq!(left.union(&right).unwrap(), r2());
    }

    #[test]
    fn union_with_empty_is_identity() {
        let e = ExchangeRelation::empty(abc());
        assert_eq!(r2().union(&e).unwrap(), r2());
    }

    #[test]
    fn full_symmetric_relation_is_valid() {
        assert!(r3().is_valid());
    }

    #[test]
    fn asymmetric_pair_reports_missing_reciprocal() {
        let r = rel(&[1, 2], &[(1, 2)]);
        assert_eq!(
            r.check_valid(),
            Err(ExchangeViolation::MissingReciprocal {
                from: node(1),
                to: node(2)
            })
        );
    }

    #[test]
    fn self_loop_reports_reflexive() {
        let r = rel(&[1], &[(1, 1)]);
        assert_eq!(r.check_valid(), Err(ExchangeViolation::Reflexive(node(1))));
    }

    #[test]
    fn symmetric_closure_fixes_one_way_pair() {
        let r = rel(&[1, 2], &[(1, 2)]);
        assert_eq!(r.symmetric_closure(), r1());
        assert_eq!(r2().symmetric_closure(), r2());
        let e = ExchangeRelation::empty(abc());
        assert_eq!(e.symmetric_closure(), e);
    }

    #[test]
    fn r3_is_not_transitive() {
        // (a,b) and (b,a) are in R3 but (a,a) is not.
        assert!(!r3().is_transitive());
    }

    #[test]
    fn empty_relation_is_vacuously_transitive() {
        assert!(ExchangeRelation::empty(abc()).is_transitive());
    }

    #[test]
    fn full_relation_with_loops_is_transitive() {
        let all: Vec<(u32, u32)> = (1..=3)
            .flat_map(|a| (1..=3).map(move |b| (a, b)))
            .collect();
        assert!(rel(&[1, 2, 3], &all).is_transitive());
    }

    #[test]
    fn graph_views_of_the_worked_examples() {
        let g1 = r1().to_graph().unwrap();
        assert_eq!(g1.edges().collect::<Vec<_>>(), vec![(node(1), node(2))]);

        let g2 = r2().to_graph().unwrap();
        assert_eq!(
            g2.edges().collect::<Vec<_>>(),
            vec![(node(1), node(2)), (node(2), node(3))]
        );

        let g3 = r3().to_graph().unwrap();
        assert_eq!(
            g3.edges().collect::<Vec<_>>(),
            vec![
                (node(1), node(2)),
                (node(1), node(3)),
                (node(2), node(3))
            ]
        );
    }

    #[test]
    fn to_graph_rejects_invalid_relation() {
        let r = rel(&[1, 2], &[(1, 2)]);
        assert!(matches!(
            r.to_graph(),
            Err(RelationError::InvalidExchange(_))
        ));
    }

    #[test]
    fn peers_are_sorted_ascending() {
        assert_eq!(r2().peers_of(node(2)).unwrap(), vec![node(1), node(3)]);
        assert_eq!(r2().peers_of(node(1)).unwrap(), vec![node(2)]);
        // A node in no pair has no peers.
        assert_eq!(r1().peers_of(node(3)).unwrap(), Vec::<NodeId>::new());
    }

    #[test]
    fn peers_of_requires_valid_relation() {
        let r = rel(&[1, 2], &[(1, 2)]);
        assert!(matches!(
            r.peers_of(node(1)),
            Err(RelationError::InvalidExchange(_))
        ));
    }

    #[test]
    fn text_round_trip_preserves_relation() {
        for r in [r1(), r2(), r3(), ExchangeRelation::empty(abc())] {
            let parsed = ExchangeRelation::from_text(&r.to_text()).unwrap();
            assert_eq!(parsed, r);
        }
    }

    #[test]
    fn text_format_is_stable() {
        assert_eq!(r1().to_text(), "universe: 1 2\n1,2\n2,1\n");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert_eq!(
            ExchangeRelation::from_text("nope"),
            Err(RelationParseError::MissingHeader)
        );
        assert_eq!(
            ExchangeRelation::from_text("universe: 1 2\n1;2"),
            Err(RelationParseError::BadPair { line: 2 })
        );
        assert_eq!(
            ExchangeRelation::from_text("universe: 1 2\n1,3"),
            Err(RelationParseError::OutsideUniverse { line: 2 })
        );
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_pairs(n: u32) -> impl Strategy<Value = Vec<(NodeId, NodeId)>> {
            let all: Vec<(NodeId, NodeId)> = (1..=n)
                .flat_map(|a| (1..=n).map(move |b| (node(a), node(b))))
                .collect();
            let len = all.len();
            proptest::sample::subsequence(all, 0..=len)
        }

        fn arb_relation(max_n: u32) -> impl Strategy<Value = ExchangeRelation> {
            (2..=max_n).prop_flat_map(|n| {
                arb_pairs(n).prop_map(move |pairs| {
                    ExchangeRelation::new((1..=n).map(node), pairs).unwrap()
                })
            })
        }

        /// Symmetric irreflexive relations, built from random edge sets.
        fn arb_valid_relation(max_n: u32) -> impl Strategy<Value = ExchangeRelation> {
            (2..=max_n).prop_flat_map(|n| {
                let edges: Vec<(NodeId, NodeId)> = (1..=n)
                    .flat_map(|a| (a + 1..=n).map(move |b| (node(a), node(b))))
                    .collect();
                let len = edges.len();
                proptest::sample::subsequence(edges, 0..=len).prop_map(move |edges| {
                    let pairs = edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]);
                    ExchangeRelation::new((1..=n).map(node), pairs).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn inverse_is_an_involution(r in arb_relation(8)) {
                prop_assert_eq!(r.inverse().inverse(), r);
            }

            #[test]
            fn valid_relations_are_their_own_inverse_and_closure(r in arb_valid_relation(8)) {
                prop_assert!(r.is_valid());
                prop_assert_eq!(r.inverse(), r.clone());
                prop_assert_eq!(r.symmetric_closure(), r);
            }

            #[test]
            fn composition_is_associative(
                rels in (2u32..=6).prop_flat_map(|n| {
                    (arb_pairs(n), arb_pairs(n), arb_pairs(n)).prop_map(move |(p, q, s)| {
                        let build = |pairs| ExchangeRelation::new((1..=n).map(node), pairs).unwrap();
                        (build(p), build(q), build(s))
                    })
                })
            ) {
                let (r, s, t) = rels;
                let left = r.compose(&s).unwrap().compose(&t).unwrap();
                let right = r.compose(&s.compose(&t).unwrap()).unwrap();
                prop_assert_eq!(left, right);
            }

            #[test]
            fn graph_round_trip_reproduces_the_relation(r in arb_valid_relation(8)) {
                prop_assert_eq!(r.to_graph().unwrap().to_relation(), r);
            }

            #[test]
            fn peer_lists_match_out_degree(r in arb_valid_relation(8)) {
                for x in r.universe() {
                    prop_assert!(!r.contains(x, x));
                    let out_degree = r.pairs().filter(|&(from, _)| from == x).count();
                    prop_assert_eq!(r.peers_of(x).unwrap().len(), out_degree);
                }
            }

            #[test]
            fn transitivity_agrees_with_matrix_oracle(r in arb_relation(6)) {
                // Independent route: triple loop over an adjacency matrix.
                let ids: Vec<NodeId> = r.universe().collect();
                let k = ids.len();
                let index = |v: NodeId| ids.iter().position(|&u| u == v).unwrap();
                let mut adj = vec![vec![false; k]; k];
                for (a, b) in r.pairs() {
                    adj[index(a)][index(b)] = true;
                }
                let mut transitive = true;
                for x in 0..k {
                    for z in 0..k {
                        for y in 0..k {
                            if adj[x][z] && adj[z][y] && !adj[x][y] {
                                transitive = false;
                            }
                        }
                    }
                }
                prop_assert_eq!(r.is_transitive(), transitive);
            }
        }
    }
}
