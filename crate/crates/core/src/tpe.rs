//! Tree Parzen Estimator over the discrete sub-spaces of a cell.
//!
//! Observations are kept per budget. For the largest budget with enough
//! observations the pool is split into a good and a bad set, a categorical
//! product KDE is fitted to each, and the proposal is the draw from the widened
//! good density that maximizes `l(x) / g(x)`. Higher accuracy is better, so the
//! good set is the top of the pool.

use std::cell::Cell;
use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use thiserror::Error;

use crate::search_space::{
    num_edge_slots, sample_skip_pattern, CellGraph, GeneralizedOp, OpDomain, SkipPattern,
    SpaceError,
};

/// Floor applied to the bad-set density before taking the ratio.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Candidate bandwidths for the leave-one-out fit.
pub const BANDWIDTH_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Bandwidth used when there are too few points for leave-one-out.
pub const FALLBACK_BANDWIDTH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TpeError {
    #[error("pool at budget {budget} has {have} observations, need at least {need}")]
    PoolTooSmall { budget: u32, have: usize, need: usize },
    #[error("cannot fit a density to an empty observation set")]
    EmptySet,
    #[error("accuracy {0} is outside [0, 1]")]
    AccuracyOutOfRange(f64),
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("invalid split configuration: {0}")]
    InvalidSpec(&'static str),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub cell: CellGraph,
    pub budget: u32,
    pub accuracy: f64,
    pub timestamp: u64,
}

impl Observation {
    pub fn new(cell: CellGraph, budget: u32, accuracy: f64, timestamp: u64) -> Result<Self, TpeError> {
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(TpeError::AccuracyOutOfRange(accuracy));
        }
        if budget == 0 {
            return Err(TpeError::ZeroBudget);
        }
        Ok(Self { cell, budget, accuracy, timestamp })
    }
}

/// The observation pool `D`, grouped by budget.
#[derive(Debug, Clone, Default)]
pub struct ObservationPool {
    by_budget: BTreeMap<u32, Vec<Observation>>,
    len: usize,
}

impl ObservationPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, obs: Observation) {
        self.by_budget.entry(obs.budget).or_default().push(obs);
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn at_budget(&self, budget: u32) -> &[Observation] {
        self.by_budget.get(&budget).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn budgets(&self) -> impl DoubleEndedIterator<Item = u32> + '_ {
        self.by_budget.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.by_budget.values().flatten()
    }

    /// Largest budget holding at least `n_min + 2` observations.
    pub fn modeling_budget(&self, n_min: usize) -> Option<u32> {
        self.by_budget
            .iter()
            .rev()
            .find(|(_, obs)| obs.len() >= n_min + 2)
            .map(|(&b, _)| b)
    }
}

/// Knobs of the good/bad split and of the proposal step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub n_min: usize,
    /// Discount rate: fraction of the pool that forms the good set.
    pub q: f64,
    /// Percentile defining the reported threshold accuracy.
    pub alpha_quantile: f64,
    pub n_samples: usize,
    pub bandwidth_factor: f64,
    /// Probability of ignoring the model and sampling uniformly.
    pub rho: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            n_min: 5,
            q: 0.15,
            alpha_quantile: 0.15,
            n_samples: 64,
            bandwidth_factor: 3.0,
            rho: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), TpeError> {
        if self.n_min < 1 {
            return Err(TpeError::InvalidSpec("n_min must be >= 1"));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(TpeError::InvalidSpec("q must be in (0, 1)"));
        }
        if !(self.alpha_quantile > 0.0 && self.alpha_quantile < 1.0) {
            return Err(TpeError::InvalidSpec("alpha_quantile must be in (0, 1)"));
        }
        if self.n_samples < 1 {
            return Err(TpeError::InvalidSpec("n_samples must be >= 1"));
        }
        if self.bandwidth_factor.is_nan() || self.bandwidth_factor < 1.0 {
            return Err(TpeError::InvalidSpec("bandwidth_factor must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(TpeError::InvalidSpec("rho must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Good and bad set sizes for a pool of `n_b` observations.
pub fn split_counts(n_b: usize, q: f64, n_min: usize) -> (usize, usize) {
    let n_good = n_min.max((q * n_b as f64).floor() as usize);
    let n_bad = n_min.max(n_b.saturating_sub(n_good));
    (n_good, n_bad)
}

#[derive(Debug, Clone)]
pub struct Split {
    pub good: Vec<Observation>,
    pub bad: Vec<Observation>,
    /// Accuracy at the `1 - alpha_quantile` percentile of the pool.
    pub threshold: f64,
}

/// Splits the pool at `budget` into good and bad sets.
///
/// Observations are ranked by descending accuracy, ties going to the earlier
/// timestamp. The good set is the head of the ranking and the bad set its tail;
/// they overlap only when the `n_min` floors force it.
pub fn split_pool(pool: &ObservationPool, spec: &SplitSpec, budget: u32) -> Result<Split, TpeError> {
    let (good, bad, threshold) = split_refs(pool, spec, budget)?;
    Ok(Split {
        good: good.into_iter().cloned().collect(),
        bad: bad.into_iter().cloned().collect(),
        threshold,
    })
}

type SplitRefs<'p> = (Vec<&'p Observation>, Vec<&'p Observation>, f64);

fn split_refs<'p>(pool: &'p ObservationPool, spec: &SplitSpec, budget: u32) -> Result<SplitRefs<'p>, TpeError> {
    let obs = pool.at_budget(budget);
    let need = spec.n_min + 2;
    if obs.len() < need {
        return Err(TpeError::PoolTooSmall { budget, have: obs.len(), need });
    }
    let mut ranked: Vec<&Observation> = obs.iter().collect();
    ranked.sort_by(|a, b| {
        b.accuracy
            .total_cmp(&a.accuracy)
            .then(a.timestamp.cmp(&b.timestamp))
    });
    let n_b = ranked.len();
    let (n_good, n_bad) = split_counts(n_b, spec.q, spec.n_min);
    let n_good = n_good.min(n_b);
    let n_bad = n_bad.min(n_b);
    let rank = ((spec.alpha_quantile * n_b as f64).ceil() as usize).clamp(1, n_b);
    let threshold = ranked[rank - 1].accuracy;
    Ok((ranked[..n_good].to_vec(), ranked[n_b - n_bad..].to_vec(), threshold))
}

/// Which half of the decoupled space a sampler works on, and how a cell
/// projects onto it.
#[derive(Debug, Clone, PartialEq)]
pub enum Subspace {
    /// One binary dimension per upper-triangular edge slot.
    Skip { n_nodes: usize },
    /// One categorical dimension per node, valued by domain position.
    Ops { n_nodes: usize, domain: OpDomain },
    /// The edge dimensions followed by the node dimensions.
    Joint { n_nodes: usize, domain: OpDomain },
}

impl Subspace {
    pub fn cardinalities(&self) -> Vec<usize> {
        match self {
            Subspace::Skip { n_nodes } => vec![2; num_edge_slots(*n_nodes)],
            Subspace::Ops { n_nodes, domain } => vec![domain.len(); *n_nodes],
            Subspace::Joint { n_nodes, domain } => {
                let mut cards = vec![2; num_edge_slots(*n_nodes)];
                cards.extend(std::iter::repeat_n(domain.len(), *n_nodes));
                cards
            }
        }
    }

    fn split_point<'p>(&self, point: &'p [usize]) -> (&'p [usize], &'p [usize]) {
        match self {
            Subspace::Skip { .. } => (point, &[]),
            Subspace::Ops { .. } => (&[], point),
            Subspace::Joint { n_nodes, .. } => point.split_at(num_edge_slots(*n_nodes).min(point.len())),
        }
    }

    pub fn project(&self, cell: &CellGraph) -> Result<Vec<usize>, SpaceError> {
        match self {
            Subspace::Skip { .. } => Ok(cell.skip().edges().iter().map(|&e| e as usize).collect()),
            Subspace::Ops { domain, .. } => project_ops(cell, domain),
            Subspace::Joint { domain, .. } => {
                let mut point: Vec<usize> = cell.skip().edges().iter().map(|&e| e as usize).collect();
                point.extend(project_ops(cell, domain)?);
                Ok(point)
            }
        }
    }

    pub fn is_valid(&self, point: &[usize]) -> bool {
        match self {
            Subspace::Skip { n_nodes } => skip_bits_valid(*n_nodes, point),
            Subspace::Ops { n_nodes, domain } => {
                point.len() == *n_nodes && point.iter().all(|&p| p < domain.len())
            }
            Subspace::Joint { n_nodes, domain } => {
                let (skip, ops) = self.split_point(point);
                let slots = num_edge_slots(*n_nodes);
                skip.len() == slots
                    && skip_bits_valid(*n_nodes, skip)
                    && ops.len() == *n_nodes
                    && ops.iter().all(|&p| p < domain.len())
            }
        }
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<usize>, SpaceError> {
        match self {
            Subspace::Skip { n_nodes } => {
                let p = sample_skip_pattern(*n_nodes, rng)?;
                Ok(p.edges().iter().map(|&e| e as usize).collect())
            }
            Subspace::Ops { n_nodes, domain } => {
                Ok((0..*n_nodes).map(|_| rng.random_range(0..domain.len())).collect())
            }
            Subspace::Joint { n_nodes, domain } => {
                let mut point = Subspace::Skip { n_nodes: *n_nodes }.random(rng)?;
                point.extend((0..*n_nodes).map(|_| rng.random_range(0..domain.len())));
                Ok(point)
            }
        }
    }

    pub fn to_skip(&self, point: &[usize]) -> Result<SkipPattern, SpaceError> {
        let n_nodes = match self {
            Subspace::Skip { n_nodes } | Subspace::Ops { n_nodes, .. } | Subspace::Joint { n_nodes, .. } => *n_nodes,
        };
        let (skip, _) = self.split_point(point);
        SkipPattern::new(n_nodes, skip.iter().map(|&b| b == 1).collect())
    }

    pub fn to_ops(&self, point: &[usize]) -> Result<Vec<GeneralizedOp>, SpaceError> {
        let (Subspace::Ops { domain, .. } | Subspace::Joint { domain, .. }) = self else {
            panic!("to_ops called on the skip subspace");
        };
        let (_, ops) = self.split_point(point);
        ops.iter()
            .map(|&p| domain.get(p).ok_or(SpaceError::OutOfRange { what: "domain position", index: p }))
            .collect()
    }

    /// The cell a joint point encodes.
    pub fn to_cell(&self, point: &[usize]) -> Result<CellGraph, SpaceError> {
        CellGraph::new(self.to_skip(point)?, self.to_ops(point)?)
    }
}

/// Whether upper-triangular edge bits leave no node isolated.
fn skip_bits_valid(n_nodes: usize, bits: &[usize]) -> bool {
    if n_nodes < 2 || bits.len() != num_edge_slots(n_nodes) {
        return false;
    }
    if n_nodes > 64 {
        return SkipPattern::new(n_nodes, bits.iter().map(|&b| b == 1).collect()).is_ok();
    }
    let mut covered = 0u64;
    let mut slot = 0;
    for i in 0..n_nodes {
        for j in (i + 1)..n_nodes {
            if bits[slot] == 1 {
                covered |= (1u64 << i) | (1u64 << j);
            }
            slot += 1;
        }
    }
    covered.count_ones() as usize == n_nodes
}

fn project_ops(cell: &CellGraph, domain: &OpDomain) -> Result<Vec<usize>, SpaceError> {
    cell.ops()
        .iter()
        .map(|&g| domain.position(g).ok_or(SpaceError::NotInDomain(g)))
        .collect()
}

/// Product of Aitchison-Aitken style categorical kernels, averaged over the
/// fitted points.
///
/// For one point `x_i` and bandwidth `h` over `k` choices, the per-dimension
/// kernel puts `(1 - h) + h / k` on `x_i` and `h / k` on every other value.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalKde {
    cards: Vec<usize>,
    points: Vec<Vec<usize>>,
    bandwidths: Vec<f64>,
    /// Distinct points with their multiplicities.
    distinct: Vec<(Vec<usize>, f64)>,
    /// Per-dimension kernel value on and off the centre.
    on: Vec<f64>,
    off: Vec<f64>,
}

impl CategoricalKde {
    /// Fits per-dimension bandwidths by leave-one-out likelihood over
    /// [`BANDWIDTH_GRID`].
    pub fn fit(points: Vec<Vec<usize>>, cards: Vec<usize>) -> Result<Self, TpeError> {
        if points.is_empty() {
            return Err(TpeError::EmptySet);
        }
        let bandwidths = (0..cards.len())
            .map(|d| loo_bandwidth(&points, d, cards[d]))
            .collect();
        Self::with_bandwidths(points, cards, bandwidths)
    }

    pub fn with_bandwidths(
        points: Vec<Vec<usize>>,
        cards: Vec<usize>,
        bandwidths: Vec<f64>,
    ) -> Result<Self, TpeError> {
        if points.is_empty() {
            return Err(TpeError::EmptySet);
        }
        assert_eq!(bandwidths.len(), cards.len());
        assert!(points.iter().all(|p| p.len() == cards.len()));
        let mut counts: HashMap<&[usize], f64> = HashMap::new();
        let mut order = Vec::new();
        for p in &points {
            let c = counts.entry(p.as_slice()).or_insert(0.0);
            if *c == 0.0 {
                order.push(p.clone());
            }
            *c += 1.0;
        }
        let distinct = order.into_iter().map(|p| {
            let w = counts[p.as_slice()];
            (p, w)
        }).collect();
        let off: Vec<f64> = bandwidths.iter().zip(&cards).map(|(&h, &k)| kernel(0, 1, h, k)).collect();
        let on = bandwidths.iter().zip(&cards).map(|(&h, &k)| kernel(0, 0, h, k)).collect();
        Ok(Self { cards, points, bandwidths, distinct, on, off })
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Marginal probability of `value` in dimension `dim`.
    pub fn marginal(&self, dim: usize, value: usize) -> f64 {
        let h = self.bandwidths[dim];
        let k = self.cards[dim] as f64;
        let hits = self.points.iter().filter(|p| p[dim] == value).count() as f64;
        (1.0 - h) * hits / self.points.len() as f64 + h / k
    }

    pub fn density(&self, x: &[usize]) -> f64 {
        let total: f64 = self
            .distinct
            .iter()
            .map(|(p, w)| {
                w * p.iter()
                    .zip(x)
                    .enumerate()
                    .map(|(d, (&pi, &xi))| if pi == xi { self.on[d] } else { self.off[d] })
                    .product::<f64>()
            })
            .sum();
        total / self.points.len() as f64
    }

    /// Draws from the density with every bandwidth scaled by `widen`, capped at 1.
    pub fn sample<R: Rng + ?Sized>(&self, widen: f64, rng: &mut R) -> Vec<usize> {
        let center = &self.points[rng.random_range(0..self.points.len())];
        center
            .iter()
            .enumerate()
            .map(|(d, &c)| {
                let h = (self.bandwidths[d] * widen).min(1.0);
                if rng.random::<f64>() < h {
                    rng.random_range(0..self.cards[d])
                } else {
                    c
                }
            })
            .collect()
    }
}

fn kernel(center: usize, x: usize, h: f64, k: usize) -> f64 {
    let base = h / k as f64;
    if center == x {
        1.0 - h + base
    } else {
        base
    }
}

fn loo_bandwidth(points: &[Vec<usize>], dim: usize, k: usize) -> f64 {
    let n = points.len();
    if n < 2 {
        return FALLBACK_BANDWIDTH;
    }
    let mut counts = vec![0usize; k];
    for p in points {
        counts[p[dim]] += 1;
    }
    let mut best = (f64::NEG_INFINITY, FALLBACK_BANDWIDTH);
    for &h in &BANDWIDTH_GRID {
        let ll: f64 = points
            .iter()
            .map(|p| {
                let others_same = (counts[p[dim]] - 1) as f64;
                let prob = (1.0 - h) * others_same / (n - 1) as f64 + h / k as f64;
                prob.ln()
            })
            .sum();
        if ll > best.0 {
            best = (ll, h);
        }
    }
    best.1
}

/// Fitted good (`l`) and bad (`g`) densities.
#[derive(Debug, Clone)]
pub struct KdePair {
    pub good: CategoricalKde,
    pub bad: CategoricalKde,
    pub n_good: usize,
    pub n_bad: usize,
}

impl KdePair {
    pub fn fit(split: &Split, subspace: &Subspace) -> Result<Self, TpeError> {
        let good: Vec<&Observation> = split.good.iter().collect();
        let bad: Vec<&Observation> = split.bad.iter().collect();
        Self::fit_refs(&good, &bad, subspace)
    }

    fn fit_refs(good: &[&Observation], bad: &[&Observation], subspace: &Subspace) -> Result<Self, TpeError> {
        let project = |set: &[&Observation]| {
            set.iter()
                .map(|o| subspace.project(&o.cell))
                .collect::<Result<Vec<_>, _>>()
        };
        let cards = subspace.cardinalities();
        let good = CategoricalKde::fit(project(good)?, cards.clone())?;
        let bad = CategoricalKde::fit(project(bad)?, cards)?;
        Ok(Self { n_good: good.len(), n_bad: bad.len(), good, bad })
    }
}

/// The TPE acquisition value `l(x) / g(x)`.
pub fn expected_improvement_density(x: &[usize], good: &CategoricalKde, bad: &CategoricalKde) -> f64 {
    good.density(x) / bad.density(x).max(DENSITY_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProposalSource {
    Random,
    Model { budget: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub point: Vec<usize>,
    pub source: ProposalSource,
}

/// Densities fitted at the modeling budget of one pool state.
#[derive(Debug, Clone)]
pub struct TpeModel {
    pub budget: u32,
    pub kdes: KdePair,
    cards: Vec<usize>,
    /// `l/g` per point in mixed-radix order, NaN until first scored. Empty
    /// when the sub-space is too large to tabulate.
    memo: Vec<Cell<f64>>,
}

const MEMO_LIMIT: usize = 1 << 16;

impl TpeModel {
    pub fn new(budget: u32, kdes: KdePair, subspace: &Subspace) -> Self {
        let cards = subspace.cardinalities();
        let size = cards.iter().try_fold(1usize, |acc, &k| acc.checked_mul(k).filter(|&v| v <= MEMO_LIMIT));
        let memo = size.map_or_else(Vec::new, |n| vec![Cell::new(f64::NAN); n]);
        Self { budget, kdes, cards, memo }
    }

    /// `l(x) / g(x)`.
    pub fn score(&self, x: &[usize]) -> f64 {
        if self.memo.is_empty() {
            return expected_improvement_density(x, &self.kdes.good, &self.kdes.bad);
        }
        let idx = x.iter().zip(&self.cards).fold(0, |acc, (&v, &k)| acc * k + v);
        let cached = self.memo[idx].get();
        if !cached.is_nan() {
            return cached;
        }
        let v = expected_improvement_density(x, &self.kdes.good, &self.kdes.bad);
        self.memo[idx].set(v);
        v
    }
}

/// Fits the good and bad densities, or `None` while no budget has
/// `n_min + 2` observations.
pub fn fit_model(pool: &ObservationPool, spec: &SplitSpec, subspace: &Subspace) -> Result<Option<TpeModel>, TpeError> {
    let Some(budget) = pool.modeling_budget(spec.n_min) else {
        return Ok(None);
    };
    let (good, bad, _) = split_refs(pool, spec, budget)?;
    Ok(Some(TpeModel::new(budget, KdePair::fit_refs(&good, &bad, subspace)?, subspace)))
}

/// Proposes the next point of `subspace`.
///
/// Falls back to a uniform draw with probability `rho`, when no budget has
/// `n_min + 2` observations, or when no sampled candidate is valid.
pub fn propose<R: Rng + ?Sized>(
    pool: &ObservationPool,
    spec: &SplitSpec,
    subspace: &Subspace,
    rng: &mut R,
) -> Result<Proposal, TpeError> {
    let model = if spec.rho >= 1.0 { None } else { fit_model(pool, spec, subspace)? };
    propose_with(model.as_ref(), spec, subspace, rng)
}

/// [`propose`] with densities fitted beforehand.
pub fn propose_with<R: Rng + ?Sized>(
    model: Option<&TpeModel>,
    spec: &SplitSpec,
    subspace: &Subspace,
    rng: &mut R,
) -> Result<Proposal, TpeError> {
    let random = |rng: &mut R| -> Result<Proposal, TpeError> {
        Ok(Proposal { point: subspace.random(rng)?, source: ProposalSource::Random })
    };
    if rng.random::<f64>() < spec.rho {
        return random(rng);
    }
    let Some(model) = model else {
        return random(rng);
    };
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..spec.n_samples {
        let x = model.kdes.good.sample(spec.bandwidth_factor, rng);
        if !subspace.is_valid(&x) {
            continue;
        }
        let score = model.score(&x);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, x));
        }
    }
    match best {
        Some((_, point)) => Ok(Proposal { point, source: ProposalSource::Model { budget: model.budget } }),
        None => random(rng),
    }
}
