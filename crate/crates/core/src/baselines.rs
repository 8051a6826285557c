//! Reference searchers sharing the engine's oracle interface and trace schema.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;

use crate::benchmark::Oracle;
use crate::engine::{run_search, EngineConfig, EngineError, SearchOutcome, StopRule, Tracker};
use crate::search_space::{sample_skip_pattern, CellGraph, GeneralizedOp, OpDomain, SkipPattern};
use crate::seeding::SearchRng;
use crate::tpe::{propose, Observation, ObservationPool, SplitSpec, Subspace};

/// Uniform valid cell: a uniform non-degenerate skip pattern and independent
/// uniform operators.
pub fn random_cell<R: Rng + ?Sized>(n_nodes: usize, domain: &OpDomain, rng: &mut R) -> Result<CellGraph, EngineError> {
    let skip = sample_skip_pattern(n_nodes, rng)?;
    let ops = (0..n_nodes).map(|_| domain.ops()[rng.random_range(0..domain.len())]).collect();
    Ok(CellGraph::new(skip, ops)?)
}

/// One random-search evaluation at the top budget.
pub fn random_search_step(tracker: &mut Tracker<'_>, rng: &mut SearchRng) -> Result<(CellGraph, f64), EngineError> {
    let oracle = tracker.oracle();
    let cell = random_cell(oracle.n_nodes(), oracle.domain(), rng)?;
    let e = tracker.evaluate(&cell, oracle.max_budget())?;
    Ok((cell, e.validation))
}

pub fn random_search(oracle: &dyn Oracle, stop: &StopRule, rng: &mut SearchRng) -> Result<SearchOutcome, EngineError> {
    let mut tracker = Tracker::new(oracle, *stop)?;
    while !tracker.done() {
        random_search_step(&mut tracker, rng)?;
    }
    Ok(tracker.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    FlipEdge,
    Operator,
    Activation,
    Init,
}

impl Mutation {
    pub const ALL: [Mutation; 4] = [Mutation::FlipEdge, Mutation::Operator, Mutation::Activation, Mutation::Init];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub tournament_size: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self { population_size: 50, tournament_size: 10 }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.population_size < 2 || !(1..=self.population_size).contains(&self.tournament_size) {
            return Err(EngineError::Config(
                "population_size must be at least 2 and tournament_size in [1, population_size]".into(),
            ));
        }
        Ok(())
    }
}

fn component(g: GeneralizedOp, kind: Mutation) -> usize {
    match kind {
        Mutation::Operator => g.op.index(),
        Mutation::Activation => g.act.index(),
        Mutation::Init | Mutation::FlipEdge => g.init.index(),
    }
}

/// Replaces one component of `g`. Prefers domain members that differ only in
/// that component, then any member differing in it, then any other member.
fn mutate_op<R: Rng + ?Sized>(g: GeneralizedOp, kind: Mutation, domain: &OpDomain, rng: &mut R) -> GeneralizedOp {
    let same_rest = |o: &GeneralizedOp| {
        Mutation::ALL[1..].iter().filter(|&&k| k != kind).all(|&k| component(*o, k) == component(g, k))
    };
    let differs = |o: &GeneralizedOp| component(*o, kind) != component(g, kind);
    let tiers: [Vec<GeneralizedOp>; 3] = [
        domain.ops().iter().copied().filter(|o| differs(o) && same_rest(o)).collect(),
        domain.ops().iter().copied().filter(differs).collect(),
        domain.ops().iter().copied().filter(|o| *o != g).collect(),
    ];
    match tiers.iter().find(|t| !t.is_empty()) {
        Some(t) => t[rng.random_range(0..t.len())],
        None => g,
    }
}

/// Applies exactly one mutation of a uniformly chosen kind. An edge flip
/// that would isolate a node tries the other slots in random order and falls
/// back to an operator change when no flip is valid.
pub fn mutate<R: Rng + ?Sized>(cell: &CellGraph, domain: &OpDomain, rng: &mut R) -> Result<CellGraph, EngineError> {
    let kind = Mutation::ALL[rng.random_range(0..Mutation::ALL.len())];
    mutate_with(cell, kind, domain, rng)
}

pub fn mutate_with<R: Rng + ?Sized>(
    cell: &CellGraph,
    kind: Mutation,
    domain: &OpDomain,
    rng: &mut R,
) -> Result<CellGraph, EngineError> {
    let n = cell.n_nodes();
    if kind == Mutation::FlipEdge {
        let slots = cell.skip().edges().len();
        for slot in sample(rng, slots, slots) {
            let mut edges = cell.skip().edges().to_vec();
            edges[slot] = !edges[slot];
            if let Ok(skip) = SkipPattern::new(n, edges) {
                return Ok(cell.with_skip(skip)?);
            }
        }
        return mutate_with(cell, Mutation::Operator, domain, rng);
    }
    let node = rng.random_range(0..n);
    let mut ops = cell.ops().to_vec();
    ops[node] = mutate_op(ops[node], kind, domain, rng);
    Ok(cell.with_ops(ops)?)
}

/// Aging evolution state: the population in insertion order.
#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub population: VecDeque<(CellGraph, f64)>,
    pub config: EvolutionConfig,
}

impl EvolutionState {
    /// Seeds the population with random cells evaluated at the top budget.
    /// Stops early if the tracker is done.
    pub fn seed(config: EvolutionConfig, tracker: &mut Tracker<'_>, rng: &mut SearchRng) -> Result<Self, EngineError> {
        config.validate()?;
        let mut population = VecDeque::with_capacity(config.population_size + 1);
        while population.len() < config.population_size && !tracker.done() {
            population.push_back(random_search_step(tracker, rng)?);
        }
        Ok(Self { population, config })
    }
}

/// Tournament selection, one mutation, evaluation, then removal of the
/// oldest member. Returns the removed member.
pub fn regularized_evolution_step(
    state: &mut EvolutionState,
    tracker: &mut Tracker<'_>,
    rng: &mut SearchRng,
) -> Result<(CellGraph, f64), EngineError> {
    let oracle = tracker.oracle();
    let size = state.population.len();
    let contestants = sample(rng, size, state.config.tournament_size.min(size));
    let parent = contestants
        .iter()
        .max_by(|&a, &b| state.population[a].1.total_cmp(&state.population[b].1).then(b.cmp(&a)))
        .expect("non-empty tournament");
    let child = mutate(&state.population[parent].0, oracle.domain(), rng)?;
    let e = tracker.evaluate(&child, oracle.max_budget())?;
    state.population.push_back((child, e.validation));
    Ok(state.population.pop_front().expect("non-empty population"))
}

pub fn regularized_evolution(
    config: EvolutionConfig,
    oracle: &dyn Oracle,
    stop: &StopRule,
    rng: &mut SearchRng,
) -> Result<SearchOutcome, EngineError> {
    let mut tracker = Tracker::new(oracle, *stop)?;
    let mut state = EvolutionState::seed(config, &mut tracker, rng)?;
    while !tracker.done() {
        regularized_evolution_step(&mut state, &mut tracker, rng)?;
    }
    Ok(tracker.finish())
}

/// Hyperband with uniform random proposals.
pub fn hyperband(oracle: &dyn Oracle, stop: &StopRule, rng: &mut SearchRng) -> Result<SearchOutcome, EngineError> {
    let config = EngineConfig::hyperband(*oracle.ladder());
    Ok(run_search(&config, oracle, stop, rng)?.search)
}

/// One TPE proposal over the joint cell space, evaluated at the top budget.
pub fn pure_tpe_step(
    pool: &mut ObservationPool,
    spec: &SplitSpec,
    tracker: &mut Tracker<'_>,
    rng: &mut SearchRng,
) -> Result<(CellGraph, f64), EngineError> {
    let oracle = tracker.oracle();
    let space = Subspace::Joint { n_nodes: oracle.n_nodes(), domain: oracle.domain().clone() };
    let proposal = propose(pool, spec, &space, rng)?;
    let cell = space.to_cell(&proposal.point)?;
    let budget = oracle.max_budget();
    let e = tracker.evaluate(&cell, budget)?;
    pool.push(Observation::new(cell.clone(), budget, e.validation, pool.len() as u64)?);
    Ok((cell, e.validation))
}

pub fn pure_tpe(spec: &SplitSpec, oracle: &dyn Oracle, stop: &StopRule, rng: &mut SearchRng) -> Result<SearchOutcome, EngineError> {
    spec.validate()?;
    let mut tracker = Tracker::new(oracle, *stop)?;
    let mut pool = ObservationPool::new();
    while !tracker.done() {
        pure_tpe_step(&mut pool, spec, &mut tracker, rng)?;
    }
    Ok(tracker.finish())
}
