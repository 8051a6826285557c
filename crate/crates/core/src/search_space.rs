//! Decoupled search spaces for child models.
//!
//! A child model is a [`CellGraph`]: an undirected skip-connection pattern over
//! the cell's nodes (the skip domain) plus one [`GeneralizedOp`] per node (the
//! operator domain). A generalized operator couples a base operator with an
//! activation function and an initialization method, so the operator domain is
//! the Cartesian product `13 x 4 x 3 = 156`.
//!
//! Operators, activations and initializations are symbolic identities only.
//! Nothing here executes them; benchmark oracles interpret them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

pub const NUM_OPERATORS: usize = 13;
pub const NUM_ACTIVATIONS: usize = 4;
pub const NUM_INIT_METHODS: usize = 3;
pub const NUM_GENERALIZED_OPS: usize = NUM_OPERATORS * NUM_ACTIVATIONS * NUM_INIT_METHODS;

/// Largest cell the search engine is configured for.
pub const MAX_NODES: usize = 7;
pub const DEFAULT_NODES: usize = 7;

/// Upper bound on rejection-sampling attempts for a non-degenerate pattern.
pub const MAX_SKIP_RETRIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpaceError {
    #[error("cell must have at least 2 nodes, got {0}")]
    NodeCount(usize),
    #[error("{0} nodes is too many to enumerate")]
    TooLarge(usize),
    #[error("expected {expected} upper-triangular edge bits, got {got}")]
    EdgeCount { expected: usize, got: usize },
    #[error("adjacency is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("adjacency has a self-loop at node {0}")]
    SelfLoop(usize),
    #[error("node {0} has no incident skip-connection")]
    IsolatedNode(usize),
    #[error("cell has {nodes} nodes but {ops} operators")]
    OpCount { nodes: usize, ops: usize },
    #[error("index {index} out of range for {what}")]
    OutOfRange { what: &'static str, index: usize },
    #[error("operator domain must be non-empty and free of duplicates")]
    BadDomain,
    #[error("operator {0} is not part of the operator domain")]
    NotInDomain(GeneralizedOp),
    #[error("no valid skip pattern after {0} attempts")]
    RetryLimit(usize),
    #[error("malformed cell encoding `{input}`: {reason}")]
    Parse { input: String, reason: String },
}

const OPERATOR_NAMES: [&str; NUM_OPERATORS] = [
    "identity",
    "sep_conv_3x3",
    "sep_conv_5x5",
    "sep_conv_7x7",
    "dil_conv_3x3",
    "dil_conv_5x5",
    "dil_conv_7x7",
    "max_pool_3x3",
    "max_pool_5x5",
    "avg_pool_3x3",
    "avg_pool_5x5",
    "conv_1x7_7x1",
    "conv_3x3",
];

/// One of the 13 base candidate operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OperatorId(u8);

impl OperatorId {
    pub fn new(index: usize) -> Result<Self, SpaceError> {
        if index < NUM_OPERATORS {
            Ok(Self(index as u8))
        } else {
            Err(SpaceError::OutOfRange { what: "operator", index })
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        OPERATOR_NAMES[self.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Activation {
    Selu,
    Relu,
    Elu,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; NUM_ACTIVATIONS] =
        [Activation::Selu, Activation::Relu, Activation::Elu, Activation::Tanh];

    pub fn new(index: usize) -> Result<Self, SpaceError> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or(SpaceError::OutOfRange { what: "activation", index })
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InitMethod {
    Uniform,
    Gauss,
    /// Squared-Gaussian initialization. Symbolic only.
    GaussSquared,
}

impl InitMethod {
    pub const ALL: [InitMethod; NUM_INIT_METHODS] =
        [InitMethod::Uniform, InitMethod::Gauss, InitMethod::GaussSquared];

    pub fn new(index: usize) -> Result<Self, SpaceError> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or(SpaceError::OutOfRange { what: "init method", index })
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// An (operator, activation, initialization) triple.
///
/// The derived ordering is lexicographic in `(op, act, init)`, which is also the
/// order of [`GeneralizedOp::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GeneralizedOp {
    pub op: OperatorId,
    pub act: Activation,
    pub init: InitMethod,
}

impl GeneralizedOp {
    pub fn new(op: usize, act: usize, init: usize) -> Result<Self, SpaceError> {
        Ok(Self {
            op: OperatorId::new(op)?,
            act: Activation::new(act)?,
            init: InitMethod::new(init)?,
        })
    }

    /// Dense index in `0..156`, used for embedding lookups.
    pub fn index(self) -> usize {
        (self.op.index() * NUM_ACTIVATIONS + self.act.index()) * NUM_INIT_METHODS
            + self.init.index()
    }

    pub fn from_index(index: usize) -> Result<Self, SpaceError> {
        if index >= NUM_GENERALIZED_OPS {
            return Err(SpaceError::OutOfRange { what: "generalized operator", index });
        }
        let init = index % NUM_INIT_METHODS;
        let act = (index / NUM_INIT_METHODS) % NUM_ACTIVATIONS;
        let op = index / (NUM_INIT_METHODS * NUM_ACTIVATIONS);
        Self::new(op, act, init)
    }
}

impl fmt::Display for GeneralizedOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.op.index(), self.act.index(), self.init.index())
    }
}

/// All 156 generalized operators in lexicographic `(op, act, init)` order.
pub fn enumerate_generalized_ops() -> Vec<GeneralizedOp> {
    (0..NUM_GENERALIZED_OPS)
        .map(|i| GeneralizedOp::from_index(i).expect("index in range"))
        .collect()
}

/// The set of generalized operators a search may assign to a node.
///
/// The full domain has all 156 triples; reduced domains keep exhaustive
/// benchmarks tractable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpDomain {
    ops: Vec<GeneralizedOp>,
}

impl OpDomain {
    pub fn full() -> Self {
        Self { ops: enumerate_generalized_ops() }
    }

    /// `k` operators spread evenly over the full enumeration.
    pub fn reduced(k: usize) -> Result<Self, SpaceError> {
        if k == 0 || k > NUM_GENERALIZED_OPS {
            return Err(SpaceError::BadDomain);
        }
        let ops = (0..k)
            .map(|i| GeneralizedOp::from_index(i * NUM_GENERALIZED_OPS / k))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(ops)
    }

    pub fn new(mut ops: Vec<GeneralizedOp>) -> Result<Self, SpaceError> {
        ops.sort();
        let n = ops.len();
        ops.dedup();
        if ops.is_empty() || ops.len() != n {
            return Err(SpaceError::BadDomain);
        }
        Ok(Self { ops })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[GeneralizedOp] {
        &self.ops
    }

    pub fn get(&self, position: usize) -> Option<GeneralizedOp> {
        self.ops.get(position).copied()
    }

    pub fn position(&self, op: GeneralizedOp) -> Option<usize> {
        self.ops.binary_search(&op).ok()
    }
}

/// Number of upper-triangular entries of an `n x n` matrix.
pub fn num_edge_slots(n_nodes: usize) -> usize {
    n_nodes * n_nodes.saturating_sub(1) / 2
}

/// Undirected skip-connection pattern.
///
/// Stored as the upper triangle in row-major order (`i < j`), so symmetry and
/// the zero diagonal hold by construction. Every node has at least one edge.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SkipPattern {
    n_nodes: usize,
    edges: Vec<bool>,
}

impl SkipPattern {
    pub fn new(n_nodes: usize, edges: Vec<bool>) -> Result<Self, SpaceError> {
        check_node_count(n_nodes)?;
        let expected = num_edge_slots(n_nodes);
        if edges.len() != expected {
            return Err(SpaceError::EdgeCount { expected, got: edges.len() });
        }
        let pattern = Self { n_nodes, edges };
        if let Some(node) = pattern.isolated_node() {
            return Err(SpaceError::IsolatedNode(node));
        }
        Ok(pattern)
    }

    pub fn from_adjacency(adjacency: &[Vec<bool>]) -> Result<Self, SpaceError> {
        let n = adjacency.len();
        check_node_count(n)?;
        let mut edges = Vec::with_capacity(num_edge_slots(n));
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != n {
                return Err(SpaceError::EdgeCount { expected: n, got: row.len() });
            }
            if row[i] {
                return Err(SpaceError::SelfLoop(i));
            }
            for j in (i + 1)..n {
                if row[j] != adjacency[j][i] {
                    return Err(SpaceError::NotSymmetric(i, j));
                }
                edges.push(row[j]);
            }
        }
        Self::new(n, edges)
    }

    pub fn complete(n_nodes: usize) -> Result<Self, SpaceError> {
        Self::new(n_nodes, vec![true; num_edge_slots(n_nodes)])
    }

    /// Every non-degenerate pattern on `n_nodes`, in increasing bit order.
    pub fn enumerate(n_nodes: usize) -> Result<Vec<Self>, SpaceError> {
        check_node_count(n_nodes)?;
        let slots = num_edge_slots(n_nodes);
        if slots > 24 {
            return Err(SpaceError::TooLarge(n_nodes));
        }
        let patterns = (0u64..(1u64 << slots))
            .filter_map(|mask| {
                let edges = (0..slots).map(|k| mask >> k & 1 == 1).collect();
                Self::new(n_nodes, edges).ok()
            })
            .collect();
        Ok(patterns)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Upper-triangular edge bits, row-major with `i < j`.
    pub fn edges(&self) -> &[bool] {
        &self.edges
    }

    pub fn edge_slot(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        debug_assert!(a != b && b < self.n_nodes);
        a * (2 * self.n_nodes - a - 1) / 2 + (b - a - 1)
    }

    /// Endpoints of the edge slot `slot`.
    pub fn slot_endpoints(&self, slot: usize) -> (usize, usize) {
        let mut k = slot;
        for i in 0..self.n_nodes {
            let row = self.n_nodes - i - 1;
            if k < row {
                return (i, i + 1 + k);
            }
            k -= row;
        }
        panic!("edge slot {slot} out of range");
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.edges[self.edge_slot(i, j)]
    }

    pub fn degree(&self, node: usize) -> usize {
        (0..self.n_nodes).filter(|&j| self.has_edge(node, j)).count()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    /// Dense symmetric adjacency with a zero diagonal.
    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        (0..self.n_nodes)
            .map(|i| (0..self.n_nodes).map(|j| self.has_edge(i, j)).collect())
            .collect()
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n_nodes;
        let mut edges = vec![false; self.edges.len()];
        for i in 0..n {
            for j in (i + 1)..n {
                if self.has_edge(i, j) {
                    edges[self.edge_slot(perm[i], perm[j])] = true;
                }
            }
        }
        Self { n_nodes: n, edges }
    }

    fn isolated_node(&self) -> Option<usize> {
        (0..self.n_nodes).find(|&i| self.degree(i) == 0)
    }
}

fn check_node_count(n_nodes: usize) -> Result<(), SpaceError> {
    if n_nodes >= 2 {
        Ok(())
    } else {
        Err(SpaceError::NodeCount(n_nodes))
    }
}

/// Uniform prior over non-degenerate patterns: every edge is a fair coin,
/// redrawn until no node is isolated.
pub fn sample_skip_pattern<R: Rng + ?Sized>(
    n_nodes: usize,
    rng: &mut R,
) -> Result<SkipPattern, SpaceError> {
    check_node_count(n_nodes)?;
    let slots = num_edge_slots(n_nodes);
    for _ in 0..MAX_SKIP_RETRIES {
        let edges = (0..slots).map(|_| rng.random_bool(0.5)).collect();
        if let Ok(pattern) = SkipPattern::new(n_nodes, edges) {
            return Ok(pattern);
        }
    }
    Err(SpaceError::RetryLimit(MAX_SKIP_RETRIES))
}

/// Decaying per-edge dropout applied to proposed skip patterns.
///
/// The current rate is `rate0 * decay^step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropBlocker {
    rate0: f64,
    decay: f64,
    step: u64,
}

impl DropBlocker {
    pub const DEFAULT_RATE0: f64 = 0.9;
    pub const DEFAULT_DECAY: f64 = 0.98;

    pub fn new(rate0: f64, decay: f64) -> Option<Self> {
        let valid = (0.0..=1.0).contains(&rate0) && decay > 0.0 && decay <= 1.0;
        valid.then_some(Self { rate0, decay, step: 0 })
    }

    /// A blocker that never drops anything.
    pub fn disabled() -> Self {
        Self { rate0: 0.0, decay: 1.0, step: 0 }
    }

    pub fn rate0(&self) -> f64 {
        self.rate0
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn rate(&self) -> f64 {
        self.rate0 * self.decay.powi(self.step.min(i32::MAX as u64) as i32)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn at_step(self, step: u64) -> Self {
        Self { step, ..self }
    }

    pub fn advanced(self) -> Self {
        self.at_step(self.step + 1)
    }
}

impl Default for DropBlocker {
    fn default() -> Self {
        Self { rate0: Self::DEFAULT_RATE0, decay: Self::DEFAULT_DECAY, step: 0 }
    }
}

/// Drops each existing edge independently with the blocker's current rate.
///
/// A node left without edges gets back the last removed edge incident to it.
pub fn apply_drop_blocker<R: Rng + ?Sized>(
    pattern: &SkipPattern,
    blocker: &DropBlocker,
    rng: &mut R,
) -> SkipPattern {
    let rate = blocker.rate();
    if rate <= 0.0 {
        return pattern.clone();
    }
    let mut out = pattern.clone();
    let mut removed = Vec::new();
    for slot in 0..out.edges.len() {
        if out.edges[slot] && rng.random_bool(rate.min(1.0)) {
            out.edges[slot] = false;
            removed.push(slot);
        }
    }
    while let Some(node) = out.isolated_node() {
        let slot = removed
            .iter()
            .rev()
            .copied()
            .find(|&s| {
                let (a, b) = out.slot_endpoints(s);
                (a == node || b == node) && !out.edges[s]
            })
            .expect("an isolated node lost at least one edge");
        out.edges[slot] = true;
    }
    out
}

/// A child-model configuration: skip pattern plus one operator per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellGraph {
    skip: SkipPattern,
    ops: Vec<GeneralizedOp>,
}

impl CellGraph {
    pub fn new(skip: SkipPattern, ops: Vec<GeneralizedOp>) -> Result<Self, SpaceError> {
        if ops.len() != skip.n_nodes() {
            return Err(SpaceError::OpCount { nodes: skip.n_nodes(), ops: ops.len() });
        }
        Ok(Self { skip, ops })
    }

    pub fn skip(&self) -> &SkipPattern {
        &self.skip
    }

    pub fn ops(&self) -> &[GeneralizedOp] {
        &self.ops
    }

    pub fn n_nodes(&self) -> usize {
        self.skip.n_nodes()
    }

    pub fn with_skip(&self, skip: SkipPattern) -> Result<Self, SpaceError> {
        Self::new(skip, self.ops.clone())
    }

    pub fn with_ops(&self, ops: Vec<GeneralizedOp>) -> Result<Self, SpaceError> {
        Self::new(self.skip.clone(), ops)
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut ops = self.ops.clone();
        for (i, &p) in perm.iter().enumerate() {
            ops[p] = self.ops[i];
        }
        Self { skip: self.skip.permuted(perm), ops }
    }

    /// Canonical single-line form `n_nodes|edge-bits|op:act:init,...`.
    ///
    /// Edge bits are the upper triangle in row-major order (`i < j`).
    pub fn encode(&self) -> String {
        self.to_string()
    }

    pub fn decode(s: &str) -> Result<Self, SpaceError> {
        s.parse()
    }
}

impl fmt::Display for CellGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|", self.n_nodes())?;
        for &e in self.skip.edges() {
            f.write_str(if e { "1" } else { "0" })?;
        }
        f.write_str("|")?;
        for (i, op) in self.ops.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{op}")?;
        }
        Ok(())
    }
}

impl FromStr for CellGraph {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fail = |reason: &str| SpaceError::Parse { input: s.to_owned(), reason: reason.to_owned() };
        let mut parts = s.split('|');
        let (Some(n), Some(bits), Some(ops), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(fail("expected three `|`-separated fields"));
        };
        let n_nodes: usize = n.parse().map_err(|_| fail("bad node count"))?;
        let edges = bits
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(fail("edge bits must be 0 or 1")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let ops = ops
            .split(',')
            .map(|triple| {
                let idx = triple
                    .split(':')
                    .map(|x| x.parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| fail("operator fields must be integers"))?;
                match idx[..] {
                    [op, act, init] => GeneralizedOp::new(op, act, init),
                    _ => Err(fail("operator must be op:act:init")),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(SkipPattern::new(n_nodes, edges)?, ops)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generalized_op_enumeration() {
        let all = enumerate_generalized_ops();
        assert_eq!(all.len(), 156);
        assert_eq!(all[0], GeneralizedOp::new(0, 0, 0).unwrap());
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        let relu = all.iter().filter(|g| g.act == Activation::Relu).count();
        assert_eq!(relu, 39);
        for (i, g) in all.iter().enumerate() {
            assert_eq!(g.index(), i);
        }
    }

    #[test]
    fn two_node_sampling_has_single_outcome() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = sample_skip_pattern(2, &mut rng).unwrap();
            assert!(p.has_edge(0, 1) && p.has_edge(1, 0));
        }
    }

    #[test]
    fn one_node_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_skip_pattern(1, &mut rng), Err(SpaceError::NodeCount(1)));
    }

    #[test]
    fn seeded_draws_are_symmetric_without_self_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let p = sample_skip_pattern(4, &mut rng).unwrap();
            let a = p.adjacency();
            for (i, row) in a.iter().enumerate() {
                assert!(!row[i]);
                assert!(p.degree(i) > 0);
                for (j, &e) in row.iter().enumerate() {
                    assert_eq!(e, a[j][i]);
                }
            }
        }
    }

    #[test]
    fn edge_slot_round_trip() {
        let p = SkipPattern::complete(6).unwrap();
        for slot in 0..num_edge_slots(6) {
            let (i, j) = p.slot_endpoints(slot);
            assert!(i < j);
            assert_eq!(p.edge_slot(i, j), slot);
            assert_eq!(p.edge_slot(j, i), slot);
        }
    }

    #[test]
    fn four_node_pattern_count() {
        // Labeled graphs on 4 vertices without isolated vertices.
        assert_eq!(SkipPattern::enumerate(4).unwrap().len(), 41);
        assert_eq!(SkipPattern::enumerate(2).unwrap().len(), 1);
    }

    #[test]
    fn adjacency_validation() {
        let asym = vec![vec![false, true], vec![false, false]];
        assert_eq!(SkipPattern::from_adjacency(&asym), Err(SpaceError::NotSymmetric(0, 1)));
        let looped = vec![vec![true, true], vec![true, false]];
        assert_eq!(SkipPattern::from_adjacency(&looped), Err(SpaceError::SelfLoop(0)));
        let isolated = vec![false, false, true];
        assert_eq!(SkipPattern::new(3, isolated), Err(SpaceError::IsolatedNode(0)));
    }

    #[test]
    fn zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = SkipPattern::complete(5).unwrap();
        let blocker = DropBlocker::new(0.0, 0.5).unwrap();
        assert_eq!(apply_drop_blocker(&p, &blocker, &mut rng), p);
    }

    #[test]
    fn full_rate_keeps_the_only_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = SkipPattern::complete(2).unwrap();
        let blocker = DropBlocker::new(1.0, 1.0).unwrap();
        assert_eq!(apply_drop_blocker(&p, &blocker, &mut rng), p);
    }

    #[test]
    fn half_rate_survival_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let p = SkipPattern::complete(8).unwrap();
        let blocker = DropBlocker::new(0.5, 1.0).unwrap();
        let trials = 10_000;
        let survived: usize =
            (0..trials).map(|_| apply_drop_blocker(&p, &blocker, &mut rng).edge_count()).sum();
        let frac = survived as f64 / (trials * p.edge_count()) as f64;
        assert!((frac - 0.5).abs() < 0.02, "surviving fraction {frac}");
    }

    #[test]
    fn blocker_rate_decays() {
        let b = DropBlocker::default();
        assert_eq!(b.rate(), 0.9);
        let rates: Vec<f64> = (0..200).map(|s| b.at_step(s).rate()).collect();
        assert!(rates.windows(2).all(|w| w[1] <= w[0]));
        assert!((b.advanced().rate() - 0.9 * 0.98).abs() < 1e-15);
        assert!(DropBlocker::new(1.5, 0.9).is_none());
        assert!(DropBlocker::new(0.5, 0.0).is_none());
    }

    #[test]
    fn encoding_format() {
        let skip = SkipPattern::new(3, vec![true, false, true]).unwrap();
        let ops = vec![
            GeneralizedOp::new(0, 1, 2).unwrap(),
            GeneralizedOp::new(12, 3, 0).unwrap(),
            GeneralizedOp::new(4, 0, 1).unwrap(),
        ];
        let cell = CellGraph::new(skip, ops).unwrap();
        assert_eq!(cell.encode(), "3|101|0:1:2,12:3:0,4:0:1");
        assert_eq!(CellGraph::decode("3|101|0:1:2,12:3:0,4:0:1").unwrap(), cell);
    }

    #[test]
    fn single_activation_change_changes_encoding() {
        let skip = SkipPattern::complete(3).unwrap();
        let a = CellGraph::new(skip.clone(), vec![GeneralizedOp::new(1, 0, 0).unwrap(); 3]).unwrap();
        let mut ops = a.ops().to_vec();
        ops[1].act = Activation::Tanh;
        let b = CellGraph::new(skip, ops).unwrap();
        assert_ne!(a.encode(), b.encode());
    }

    #[test]
    fn malformed_encodings_are_rejected() {
        for bad in ["", "3|101", "3|10|0:0:0,0:0:0,0:0:0", "3|1x1|0:0:0,0:0:0,0:0:0",
                    "3|101|0:0:0,0:0:0", "3|101|0:0,0:0:0,0:0:0", "3|101|13:0:0,0:0:0,0:0:0",
                    "2|00|0:0:0,0:0:0", "a|1|0:0:0,0:0:0"] {
            assert!(CellGraph::decode(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn reduced_domain() {
        let d = OpDomain::reduced(3).unwrap();
        assert_eq!(d.len(), 3);
        let idx: Vec<usize> = d.ops().iter().map(|g| g.index()).collect();
        assert_eq!(idx, vec![0, 52, 104]);
        assert_eq!(d.position(d.ops()[2]), Some(2));
        assert_eq!(OpDomain::full().len(), 156);
        assert!(OpDomain::reduced(0).is_err());
    }
}
