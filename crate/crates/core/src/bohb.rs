//! Hyperband budget scheduling around the TPE proposer, and the controller
//! that alternates between the skip-connection and operator sub-spaces.

use rand::Rng;
use thiserror::Error;

use crate::search_space::{
    apply_drop_blocker, CellGraph, DropBlocker, GeneralizedOp, OpDomain, SkipPattern, SpaceError,
};
use crate::tpe::{fit_model, propose_with, Observation, ObservationPool, SplitSpec, Subspace, TpeError, TpeModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BohbError {
    #[error("invalid budget ladder: {0}")]
    Ladder(&'static str),
    #[error("bracket is exhausted")]
    BracketExhausted,
    #[error("rung {0} still has outstanding evaluations")]
    AwaitingResults(usize),
    #[error("result reported for rung {got}, but rung {expected} is active")]
    WrongRung { expected: usize, got: usize },
    #[error(transparent)]
    Tpe(#[from] TpeError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Geometric budget grid `min_budget * eta^k`, capped at `max_budget`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetLadder {
    pub min_budget: u32,
    pub max_budget: u32,
    pub eta: u32,
}

impl Default for BudgetLadder {
    fn default() -> Self {
        Self { min_budget: 4, max_budget: 108, eta: 3 }
    }
}

impl BudgetLadder {
    pub fn new(min_budget: u32, max_budget: u32, eta: u32) -> Result<Self, BohbError> {
        let ladder = Self { min_budget, max_budget, eta };
        ladder.validate()?;
        Ok(ladder)
    }

    pub fn validate(&self) -> Result<(), BohbError> {
        if self.min_budget == 0 {
            return Err(BohbError::Ladder("min_budget must be positive"));
        }
        if self.max_budget < self.min_budget {
            return Err(BohbError::Ladder("max_budget must be >= min_budget"));
        }
        if self.eta < 2 {
            return Err(BohbError::Ladder("eta must be >= 2"));
        }
        Ok(())
    }

    pub fn budgets(&self) -> Vec<u32> {
        let mut out = Vec::new();
        let mut b = self.min_budget as u64;
        while b < self.max_budget as u64 {
            out.push(b as u32);
            b *= self.eta as u64;
        }
        out.push(self.max_budget);
        out
    }

    pub fn levels(&self) -> usize {
        self.budgets().len()
    }

    /// Position of `budget` on the ladder.
    pub fn level_of(&self, budget: u32) -> Option<usize> {
        self.budgets().iter().position(|&b| b == budget)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rung {
    pub budget: u32,
    pub capacity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RungResult<C> {
    pub config: C,
    pub accuracy: f64,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SlotKind<C> {
    /// The caller must supply a new configuration.
    Fresh,
    Promoted(C),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slot<C> {
    pub rung: usize,
    pub budget: u32,
    pub kind: SlotKind<C>,
}

/// One successive-halving bracket.
///
/// Rung `k + 1` holds `floor(capacity_k / eta)` configurations, which are the
/// best of rung `k` by accuracy with earlier timestamps winning ties. A rung
/// is promoted only after all of its slots have reported.
#[derive(Debug, Clone)]
pub struct Bracket<C> {
    rungs: Vec<Rung>,
    results: Vec<Vec<RungResult<C>>>,
    promoted: Vec<Vec<C>>,
    current: usize,
    issued: usize,
}

impl<C: Clone> Bracket<C> {
    /// Bracket starting with `base_capacity` configurations at `budgets[0]`.
    pub fn new(base_capacity: usize, budgets: &[u32], eta: u32) -> Self {
        let mut rungs = Vec::new();
        let mut capacity = base_capacity;
        for &budget in budgets {
            if capacity == 0 {
                break;
            }
            rungs.push(Rung { budget, capacity });
            capacity /= eta as usize;
        }
        let n = rungs.len();
        Self {
            rungs,
            results: vec![Vec::new(); n],
            promoted: vec![Vec::new(); n],
            current: 0,
            issued: 0,
        }
    }

    pub fn rungs(&self) -> &[Rung] {
        &self.rungs
    }

    pub fn results(&self, rung: usize) -> &[RungResult<C>] {
        &self.results[rung]
    }

    /// Configurations promoted into `rung` (empty for rung 0).
    pub fn promoted(&self, rung: usize) -> &[C] {
        &self.promoted[rung]
    }

    pub fn is_exhausted(&self) -> bool {
        self.current >= self.rungs.len()
    }

    /// Closed-form total epochs of a fully executed bracket.
    pub fn planned_epochs(&self) -> u64 {
        self.rungs.iter().map(|r| r.capacity as u64 * r.budget as u64).sum()
    }

    pub fn charged_epochs(&self) -> u64 {
        self.rungs
            .iter()
            .zip(&self.results)
            .map(|(r, res)| r.budget as u64 * res.len() as u64)
            .sum()
    }

    pub fn next_slot(&mut self) -> Result<Slot<C>, BohbError> {
        if self.is_exhausted() {
            return Err(BohbError::BracketExhausted);
        }
        let rung = self.rungs[self.current];
        if self.issued >= rung.capacity {
            return Err(BohbError::AwaitingResults(self.current));
        }
        let kind = if self.current == 0 {
            SlotKind::Fresh
        } else {
            SlotKind::Promoted(self.promoted[self.current][self.issued].clone())
        };
        self.issued += 1;
        Ok(Slot { rung: self.current, budget: rung.budget, kind })
    }

    pub fn report(&mut self, rung: usize, config: C, accuracy: f64, timestamp: u64) -> Result<(), BohbError> {
        if rung != self.current {
            return Err(BohbError::WrongRung { expected: self.current, got: rung });
        }
        self.results[rung].push(RungResult { config, accuracy, timestamp });
        if self.results[rung].len() == self.rungs[rung].capacity {
            if let Some(next) = self.rungs.get(rung + 1) {
                self.promoted[rung + 1] = top_k(&self.results[rung], next.capacity);
            }
            self.current += 1;
            self.issued = 0;
        }
        Ok(())
    }
}

/// The `k` best results, ranked by accuracy with earlier timestamps first.
pub fn top_k<C: Clone>(results: &[RungResult<C>], k: usize) -> Vec<C> {
    let mut ranked: Vec<&RungResult<C>> = results.iter().collect();
    ranked.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy).then(a.timestamp.cmp(&b.timestamp)));
    ranked.into_iter().take(k).map(|r| r.config.clone()).collect()
}

/// Cycles through the Hyperband brackets `s = s_max, ..., 0`.
#[derive(Debug, Clone)]
pub struct HyperbandSchedule {
    budgets: Vec<u32>,
    eta: u32,
    opened: usize,
}

impl HyperbandSchedule {
    pub fn new(ladder: &BudgetLadder) -> Result<Self, BohbError> {
        ladder.validate()?;
        Ok(Self { budgets: ladder.budgets(), eta: ladder.eta, opened: 0 })
    }

    pub fn s_max(&self) -> usize {
        self.budgets.len() - 1
    }

    /// Bracket `s` starts at ladder level `s_max - s` with
    /// `ceil((s_max + 1) / (s + 1) * eta^s)` configurations.
    pub fn bracket_for<C: Clone>(&self, s: usize) -> Bracket<C> {
        let s_max = self.s_max();
        let eta = self.eta as u64;
        let num = (s_max as u64 + 1) * eta.pow(s as u32);
        let n = num.div_ceil(s as u64 + 1) as usize;
        Bracket::new(n, &self.budgets[s_max - s..], self.eta)
    }

    pub fn next_bracket<C: Clone>(&mut self) -> Bracket<C> {
        let s = self.s_max() - self.opened % (self.s_max() + 1);
        self.opened += 1;
        self.bracket_for(s)
    }

    pub fn brackets_opened(&self) -> usize {
        self.opened
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Skip,
    Op,
}

/// Which sub-space is being searched, and what the other one is held at.
#[derive(Debug, Clone)]
pub struct AlternationState {
    pub phase: Phase,
    pub fixed_skip: Option<SkipPattern>,
    pub fixed_ops: Option<Vec<GeneralizedOp>>,
    pub step: u64,
    pub blocker: DropBlocker,
    locked: bool,
}

impl AlternationState {
    pub fn new(blocker: DropBlocker) -> Self {
        Self { phase: Phase::Skip, fixed_skip: None, fixed_ops: None, step: 0, blocker, locked: false }
    }

    /// Operator-only search over a fixed skip pattern. Phase switches are
    /// ignored.
    pub fn operator_only(skip: SkipPattern) -> Self {
        Self {
            phase: Phase::Op,
            fixed_skip: Some(skip),
            fixed_ops: None,
            step: 0,
            blocker: DropBlocker::disabled(),
            locked: true,
        }
    }

    pub fn is_locked(&self) -> bool {
        self.locked
    }

    /// Flips the phase and holds the other sub-space at the incumbent. Without
    /// an incumbent both sub-spaces stay free.
    pub fn switch_phase(&mut self, incumbent: Option<&CellGraph>) {
        if self.locked {
            return;
        }
        self.phase = match self.phase {
            Phase::Skip => Phase::Op,
            Phase::Op => Phase::Skip,
        };
        match (self.phase, incumbent) {
            (_, None) => {
                self.fixed_skip = None;
                self.fixed_ops = None;
            }
            (Phase::Skip, Some(c)) => {
                self.fixed_skip = None;
                self.fixed_ops = Some(c.ops().to_vec());
            }
            (Phase::Op, Some(c)) => {
                self.fixed_skip = Some(c.skip().clone());
                self.fixed_ops = None;
            }
        }
    }
}

/// Fitted sub-space models for one pool state. The pool is assumed to only
/// grow, so its length identifies the state.
#[derive(Debug, Clone, Default)]
pub struct ModelCache {
    pool_len: Option<usize>,
    skip: Option<Option<TpeModel>>,
    ops: Option<Option<TpeModel>>,
}

impl ModelCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn model<'m>(
        slot: &'m mut Option<Option<TpeModel>>,
        pool: &ObservationPool,
        spec: &SplitSpec,
        space: &Subspace,
    ) -> Result<Option<&'m TpeModel>, TpeError> {
        if slot.is_none() {
            *slot = Some(if spec.rho >= 1.0 { None } else { fit_model(pool, spec, space)? });
        }
        Ok(slot.as_ref().and_then(Option::as_ref))
    }

    fn sync(&mut self, pool: &ObservationPool) {
        if self.pool_len != Some(pool.len()) {
            *self = Self { pool_len: Some(pool.len()), skip: None, ops: None };
        }
    }
}

/// One alternating draw: the skip pattern from `D_sk`, then the operator
/// assignment from `D_op`, each from its own projection of the shared pool.
/// A proposed (not fixed) skip pattern passes through the drop blocker.
pub fn alternate_sample<R: Rng + ?Sized>(
    state: &mut AlternationState,
    pool: &ObservationPool,
    spec: &SplitSpec,
    n_nodes: usize,
    domain: &OpDomain,
    rng: &mut R,
) -> Result<CellGraph, BohbError> {
    alternate_sample_cached(state, &mut ModelCache::new(), pool, spec, n_nodes, domain, rng)
}

/// [`alternate_sample`] reusing fitted models while the pool is unchanged.
pub fn alternate_sample_cached<R: Rng + ?Sized>(
    state: &mut AlternationState,
    cache: &mut ModelCache,
    pool: &ObservationPool,
    spec: &SplitSpec,
    n_nodes: usize,
    domain: &OpDomain,
    rng: &mut R,
) -> Result<CellGraph, BohbError> {
    cache.sync(pool);
    let skip = match &state.fixed_skip {
        Some(s) => s.clone(),
        None => {
            let space = Subspace::Skip { n_nodes };
            let model = ModelCache::model(&mut cache.skip, pool, spec, &space)?;
            let proposal = propose_with(model, spec, &space, rng)?;
            let pattern = space.to_skip(&proposal.point)?;
            let blocked = apply_drop_blocker(&pattern, &state.blocker, rng);
            state.blocker = state.blocker.advanced();
            blocked
        }
    };
    let ops = match &state.fixed_ops {
        Some(o) => o.clone(),
        None => {
            let space = Subspace::Ops { n_nodes, domain: domain.clone() };
            let model = ModelCache::model(&mut cache.ops, pool, spec, &space)?;
            let proposal = propose_with(model, spec, &space, rng)?;
            space.to_ops(&proposal.point)?
        }
    };
    state.step += 1;
    Ok(CellGraph::new(skip, ops)?)
}

/// Everything fed back after an evaluation: the TPE pool, the predictor
/// training set, and the incumbent.
#[derive(Debug, Clone, Default)]
pub struct SearchRecord {
    pub pool: ObservationPool,
    pub dataset: Vec<Observation>,
    incumbent: Option<Observation>,
    next_timestamp: u64,
}

impl SearchRecord {
    pub fn new() -> Self {
        Self::default()
    }

    /// Best observation at the largest budget seen so far.
    pub fn incumbent(&self) -> Option<&Observation> {
        self.incumbent.as_ref()
    }

    pub fn record_result(&mut self, cell: CellGraph, budget: u32, accuracy: f64) -> Result<Observation, BohbError> {
        let obs = Observation::new(cell, budget, accuracy, self.next_timestamp)?;
        self.next_timestamp += 1;
        let better = match &self.incumbent {
            None => true,
            Some(inc) => (obs.budget, obs.accuracy) > (inc.budget, inc.accuracy),
        };
        if better {
            self.incumbent = Some(obs.clone());
        }
        self.pool.push(obs.clone());
        self.dataset.push(obs.clone());
        Ok(obs)
    }
}
