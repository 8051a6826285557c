//! The search controller: alternating BOHB proposals, predictor filtering,
//! oracle evaluation and feedback in one loop.

use std::collections::{HashSet, VecDeque};

use rand::Rng;
use thiserror::Error;

use crate::benchmark::{BenchError, Evaluation, Oracle};
use crate::bohb::{alternate_sample, alternate_sample_cached, AlternationState, ModelCache, BohbError, BudgetLadder, HyperbandSchedule, SearchRecord, SlotKind};
use crate::predictor::{
    rank_candidates, train, Example, GraphInput, PredictorError, PredictorParams, TrainConfig,
};
use crate::search_space::{CellGraph, DropBlocker, SkipPattern, SpaceError};
use crate::seeding::{derive_seed, SearchRng};
use crate::tpe::{SplitSpec, TpeError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Bohb(#[from] BohbError),
    #[error(transparent)]
    Tpe(#[from] TpeError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("predictor: {0}")]
    Predictor(#[from] PredictorError),
}

/// When a search stops. At least one of `max_cost` and `max_evals` must be set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StopRule {
    /// Simulated epochs; the evaluation that crosses the limit completes.
    pub max_cost: Option<u64>,
    pub max_evals: Option<usize>,
    /// Also stop once the oracle's global optimum is evaluated at the top budget.
    pub until_optimum: bool,
}

impl StopRule {
    pub fn cost(max_cost: u64) -> Self {
        Self { max_cost: Some(max_cost), ..Self::default() }
    }

    pub fn validate(&self, oracle: &dyn Oracle) -> Result<(), EngineError> {
        if self.max_cost.is_none() && self.max_evals.is_none() {
            return Err(EngineError::Config("a cost or evaluation limit is required".into()));
        }
        if self.until_optimum && oracle.optimum().is_none() {
            return Err(EngineError::Config("stopping at the optimum needs an exhaustive oracle".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub cum_epochs: u64,
    /// Best top-budget validation accuracy so far (0 before the first).
    pub best_val: f64,
    /// Test accuracy of the cell holding `best_val`.
    pub best_test: f64,
}

/// One step per evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretTrace {
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalEntry {
    pub cell: CellGraph,
    pub budget: u32,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Best top-budget cell by validation accuracy.
    pub best: Option<(CellGraph, Evaluation)>,
    pub trace: RegretTrace,
    pub log: Vec<EvalEntry>,
    /// 1-based number of oracle queries up to and including the first
    /// top-budget evaluation of the global optimum.
    pub optimum_hit: Option<usize>,
}

impl SearchOutcome {
    pub fn total_epochs(&self) -> u64 {
        self.trace.steps.last().map_or(0, |s| s.cum_epochs)
    }
}

/// Charges oracle queries, keeps the trace and checks the stop rule.
pub struct Tracker<'a> {
    oracle: &'a dyn Oracle,
    stop: StopRule,
    optimum: Option<CellGraph>,
    outcome: SearchOutcome,
    cum_epochs: u64,
}

impl<'a> Tracker<'a> {
    pub fn new(oracle: &'a dyn Oracle, stop: StopRule) -> Result<Self, EngineError> {
        stop.validate(oracle)?;
        let optimum = if stop.until_optimum { oracle.optimum().map(|o| o.cell.clone()) } else { None };
        Ok(Self {
            oracle,
            stop,
            optimum,
            outcome: SearchOutcome { best: None, trace: RegretTrace::default(), log: Vec::new(), optimum_hit: None },
            cum_epochs: 0,
        })
    }

    pub fn oracle(&self) -> &'a dyn Oracle {
        self.oracle
    }

    pub fn evaluate(&mut self, cell: &CellGraph, budget: u32) -> Result<Evaluation, EngineError> {
        let evaluation = self.oracle.evaluate(cell, budget)?;
        self.cum_epochs += budget as u64;
        let top = budget == self.oracle.max_budget();
        if top && self.outcome.best.as_ref().is_none_or(|(_, e)| evaluation.validation > e.validation) {
            self.outcome.best = Some((cell.clone(), evaluation));
        }
        let (best_val, best_test) = self.outcome.best.as_ref().map_or((0.0, 0.0), |(_, e)| (e.validation, e.test));
        self.outcome.trace.steps.push(TraceStep { cum_epochs: self.cum_epochs, best_val, best_test });
        self.outcome.log.push(EvalEntry { cell: cell.clone(), budget, evaluation });
        if top && self.outcome.optimum_hit.is_none() && self.optimum.as_ref() == Some(cell) {
            self.outcome.optimum_hit = Some(self.outcome.log.len());
        }
        Ok(evaluation)
    }

    pub fn evaluations(&self) -> usize {
        self.outcome.log.len()
    }

    pub fn done(&self) -> bool {
        self.stop.max_cost.is_some_and(|c| self.cum_epochs >= c)
            || self.stop.max_evals.is_some_and(|n| self.evaluations() >= n)
            || self.outcome.optimum_hit.is_some()
    }

    pub fn finish(self) -> SearchOutcome {
        self.outcome
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Observations collected before the predictor filter starts.
    pub warmup_evals: usize,
    /// Candidates drawn per filter round.
    pub filter_pool: usize,
    /// Fraction of each filter round kept for evaluation.
    pub filter_quantile: f64,
    pub retrain_every: usize,
    /// Training epochs for the first fit.
    pub initial_epochs: usize,
    pub split: SplitSpec,
    pub ladder: BudgetLadder,
    /// `epochs` is used for every warm-started refit.
    pub train: TrainConfig,
    /// Warm-started refits train on at most this many of the latest examples.
    pub refit_window: usize,
    /// Alternate between the skip and operator sub-spaces, holding the other
    /// at the incumbent; otherwise both are proposed every time.
    pub alternate: bool,
    pub drop_blocker: DropBlocker,
    /// Redraw fresh proposals already evaluated at the same budget.
    pub dedup_retries: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            warmup_evals: 100,
            filter_pool: 16,
            filter_quantile: 0.25,
            retrain_every: 50,
            initial_epochs: 60,
            split: SplitSpec::default(),
            ladder: BudgetLadder::default(),
            train: TrainConfig { epochs: 10, ..TrainConfig::default() },
            refit_window: 512,
            alternate: true,
            drop_blocker: DropBlocker::default(),
            dedup_retries: 16,
        }
    }
}

impl EngineConfig {
    /// Plain Hyperband: uniform proposals, no alternation, no blocker, no filter.
    pub fn hyperband(ladder: BudgetLadder) -> Self {
        Self {
            warmup_evals: usize::MAX,
            split: SplitSpec { rho: 1.0, ..SplitSpec::default() },
            ladder,
            alternate: false,
            drop_blocker: DropBlocker::disabled(),
            ..Self::default()
        }
    }

    pub fn filter_enabled(&self) -> bool {
        self.warmup_evals != usize::MAX
    }

    pub fn validate(&self, oracle: &dyn Oracle) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.into()));
        if self.filter_pool == 0 || self.retrain_every == 0 || self.initial_epochs == 0 || self.refit_window == 0 {
            return bad("filter_pool, retrain_every, initial_epochs and refit_window must be at least 1");
        }
        if !(self.filter_quantile > 0.0 && self.filter_quantile <= 1.0) {
            return bad("filter_quantile must be in (0, 1]");
        }
        if &self.ladder != oracle.ladder() {
            return bad("engine and oracle budget ladders differ");
        }
        if self.train.arch.levels < self.ladder.levels() {
            return bad("the epoch embedding has fewer rows than the budget ladder has levels");
        }
        self.split.validate()?;
        self.ladder.validate()?;
        if self.filter_enabled() {
            self.train.validate()?;
        }
        Ok(())
    }

    fn kept_per_round(&self) -> usize {
        ((self.filter_quantile * self.filter_pool as f64).ceil() as usize).clamp(1, self.filter_pool)
    }
}

#[derive(Debug, Clone)]
pub struct EngineOutcome {
    pub search: SearchOutcome,
    pub record: SearchRecord,
    pub params: Option<PredictorParams>,
    pub retrains: usize,
}

struct Predictor {
    params: Option<PredictorParams>,
    examples: Vec<Example>,
    since_fit: usize,
    fits: usize,
    seed: u64,
}

struct Controller<'c, 'o> {
    config: &'c EngineConfig,
    tracker: Tracker<'o>,
    record: SearchRecord,
    state: AlternationState,
    cache: ModelCache,
    evaluated: HashSet<(CellGraph, u32)>,
    queue: VecDeque<CellGraph>,
    predictor: Predictor,
}

impl Controller<'_, '_> {
    fn propose(&mut self, rng: &mut SearchRng) -> Result<CellGraph, EngineError> {
        let oracle = self.tracker.oracle();
        Ok(alternate_sample_cached(
            &mut self.state,
            &mut self.cache,
            &self.record.pool,
            &self.config.split,
            oracle.n_nodes(),
            oracle.domain(),
            rng,
        )?)
    }

    /// A proposal not yet evaluated at `budget`.
    ///
    /// Up to `dedup_retries` redraws each, in order: the current phase, both
    /// sub-spaces released (unless locked), then uniform draws over the free
    /// sub-spaces. The last draw is returned if all of them repeat.
    fn propose_new(&mut self, budget: u32, rng: &mut SearchRng, avoid: &HashSet<CellGraph>) -> Result<CellGraph, EngineError> {
        let is_new = |c: &CellGraph, evaluated: &HashSet<(CellGraph, u32)>| {
            !evaluated.contains(&(c.clone(), budget)) && !avoid.contains(c)
        };
        let mut cell = self.propose(rng)?;
        for _ in 0..self.config.dedup_retries {
            if is_new(&cell, &self.evaluated) {
                return Ok(cell);
            }
            cell = self.propose(rng)?;
        }
        if is_new(&cell, &self.evaluated) {
            return Ok(cell);
        }
        let held = (self.state.fixed_skip.clone(), self.state.fixed_ops.clone());
        if !self.state.is_locked() {
            (self.state.fixed_skip, self.state.fixed_ops) = (None, None);
            for _ in 0..self.config.dedup_retries {
                cell = self.propose(rng)?;
                if is_new(&cell, &self.evaluated) {
                    break;
                }
            }
        }
        if !is_new(&cell, &self.evaluated) {
            let uniform = SplitSpec { rho: 1.0, ..self.config.split };
            let oracle = self.tracker.oracle();
            for _ in 0..self.config.dedup_retries {
                cell = alternate_sample(&mut self.state, &self.record.pool, &uniform, oracle.n_nodes(), oracle.domain(), rng)?;
                if is_new(&cell, &self.evaluated) {
                    break;
                }
            }
        }
        (self.state.fixed_skip, self.state.fixed_ops) = held;
        Ok(cell)
    }

    fn fresh(&mut self, budget: u32, rng: &mut SearchRng) -> Result<CellGraph, EngineError> {
        if self.predictor.params.is_none() {
            return self.propose_new(budget, rng, &HashSet::new());
        }
        while let Some(cell) = self.queue.pop_front() {
            if !self.evaluated.contains(&(cell.clone(), budget)) {
                return Ok(cell);
            }
        }
        let mut drawn = HashSet::new();
        let mut pool = Vec::with_capacity(self.config.filter_pool);
        for _ in 0..self.config.filter_pool {
            let cell = self.propose_new(budget, rng, &drawn)?;
            drawn.insert(cell.clone());
            pool.push(cell);
        }
        let top_level = self.config.ladder.levels() - 1;
        let params = self.predictor.params.as_ref().expect("checked above");
        let ranked = rank_candidates(params, &pool, top_level)?;
        self.queue.extend(ranked.into_iter().take(self.config.kept_per_round()).map(|(c, _)| c));
        Ok(self.queue.pop_front().expect("at least one candidate is kept"))
    }

    fn feedback(&mut self, cell: &CellGraph, budget: u32, validation: f64) -> Result<u64, EngineError> {
        let obs = self.record.record_result(cell.clone(), budget, validation)?;
        self.evaluated.insert((cell.clone(), budget));
        if self.config.filter_enabled() {
            let level = self.config.ladder.level_of(budget).expect("oracle budgets are on the ladder");
            self.predictor.examples.push(Example::new(GraphInput::from_cell(cell, level), validation)?);
            self.predictor.since_fit += 1;
            self.maybe_retrain()?;
        }
        Ok(obs.timestamp)
    }

    fn maybe_retrain(&mut self) -> Result<(), EngineError> {
        let p = &mut self.predictor;
        let due = match p.params {
            None => p.examples.len() >= self.config.warmup_evals,
            Some(_) => p.since_fit >= self.config.retrain_every,
        };
        if !due {
            return Ok(());
        }
        let mut train_config = self.config.train;
        train_config.seed = derive_seed(p.seed, p.fits as u64 + 1);
        let mut window = &p.examples[p.examples.len().saturating_sub(self.config.refit_window)..];
        let params = match p.params.take() {
            Some(params) => params,
            None => {
                window = &p.examples;
                train_config.epochs = self.config.initial_epochs;
                let mut fresh = PredictorParams::init(train_config.arch, p.seed)?;
                let mean = p.examples.iter().map(|e| e.label).sum::<f64>() / p.examples.len() as f64;
                fresh.set_output_prior(mean);
                fresh
            }
        };
        let mut params = params;
        train(&mut params, window, &train_config)?;
        p.params = Some(params);
        p.since_fit = 0;
        p.fits += 1;
        self.queue.clear();
        Ok(())
    }
}

/// Runs the full search loop until `stop` fires.
///
/// Hyperband brackets cycle from the most to the least aggressive; every
/// fresh slot is filled by an alternating proposal (filtered by the
/// predictor once it is trained), every result feeds the TPE pool and the
/// predictor set, and the searched sub-space flips after each bracket.
pub fn run_search(
    config: &EngineConfig,
    oracle: &dyn Oracle,
    stop: &StopRule,
    rng: &mut SearchRng,
) -> Result<EngineOutcome, EngineError> {
    config.validate(oracle)?;
    let predictor_seed = rng.random::<u64>();
    let mut c = Controller {
        config,
        tracker: Tracker::new(oracle, *stop)?,
        record: SearchRecord::new(),
        state: AlternationState::new(config.drop_blocker),
        cache: ModelCache::new(),
        evaluated: HashSet::new(),
        queue: VecDeque::new(),
        predictor: Predictor { params: None, examples: Vec::new(), since_fit: 0, fits: 0, seed: predictor_seed },
    };
    let mut schedule = HyperbandSchedule::new(&config.ladder)?;
    'search: loop {
        let mut bracket = schedule.next_bracket::<CellGraph>();
        while !bracket.is_exhausted() {
            let slot = bracket.next_slot()?;
            let cell = match slot.kind {
                SlotKind::Fresh => c.fresh(slot.budget, rng)?,
                SlotKind::Promoted(cell) => cell,
            };
            let evaluation = c.tracker.evaluate(&cell, slot.budget)?;
            let timestamp = c.feedback(&cell, slot.budget, evaluation.validation)?;
            bracket.report(slot.rung, cell, evaluation.validation, timestamp)?;
            if c.tracker.done() {
                break 'search;
            }
        }
        if config.alternate {
            let incumbent = c.record.incumbent().map(|o| o.cell.clone());
            c.state.switch_phase(incumbent.as_ref());
        }
    }
    Ok(EngineOutcome {
        search: c.tracker.finish(),
        record: c.record,
        params: c.predictor.params,
        retrains: c.predictor.fits,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityConfig {
    pub engine: EngineConfig,
    /// Oracle queries spent on each fixed graph.
    pub evals_per_graph: usize,
    /// Random operator assignments scored per graph for the average error.
    pub assignment_samples: usize,
    /// Epochs and learning rate of the one-off predictor fit on the search logs.
    pub fit_epochs: usize,
    pub fit_learning_rate: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig { warmup_evals: usize::MAX, ..EngineConfig::default() },
            evals_per_graph: 136,
            assignment_samples: 200,
            fit_epochs: 150,
            fit_learning_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub graph_id: usize,
    pub skip: SkipPattern,
    /// Mean predicted error `1 - accuracy` over random operator assignments.
    pub avg_error: f64,
    /// Best observed top-budget error from the operator-only search.
    pub top_error: f64,
    pub evaluations: usize,
}

impl StabilityRow {
    pub fn gap(&self) -> f64 {
        self.avg_error - self.top_error
    }
}

/// Operator-only BOHB on each fixed skip pattern, then a predictor trained on
/// every observation scores random operator assignments per pattern.
pub fn run_stability_study(
    fixed_graphs: &[SkipPattern],
    config: &StabilityConfig,
    oracle: &dyn Oracle,
    rng: &mut SearchRng,
) -> Result<Vec<StabilityRow>, EngineError> {
    let engine = &config.engine;
    engine.validate(oracle)?;
    engine.train.validate()?;
    if config.assignment_samples == 0 || config.evals_per_graph == 0 || config.fit_epochs == 0 {
        return Err(EngineError::Config("evals_per_graph, assignment_samples and fit_epochs must be at least 1".into()));
    }
    if !(config.fit_learning_rate >= 0.0 && config.fit_learning_rate.is_finite()) {
        return Err(EngineError::Config("fit_learning_rate must be finite and non-negative".into()));
    }
    let predictor_seed = rng.random::<u64>();
    let top = oracle.max_budget();
    let mut examples = Vec::new();
    let mut tops = Vec::with_capacity(fixed_graphs.len());
    for skip in fixed_graphs {
        if skip.n_nodes() != oracle.n_nodes() {
            return Err(EngineError::Config(format!(
                "fixed graph has {} nodes, oracle has {}",
                skip.n_nodes(),
                oracle.n_nodes()
            )));
        }
        let mut c = Controller {
            config: engine,
            tracker: Tracker::new(oracle, StopRule { max_evals: Some(config.evals_per_graph), ..StopRule::default() })?,
            record: SearchRecord::new(),
            state: AlternationState::operator_only(skip.clone()),
            cache: ModelCache::new(),
            evaluated: HashSet::new(),
            queue: VecDeque::new(),
            predictor: Predictor { params: None, examples: Vec::new(), since_fit: 0, fits: 0, seed: 0 },
        };
        let mut schedule = HyperbandSchedule::new(&engine.ladder)?;
        'search: loop {
            let mut bracket = schedule.next_bracket::<CellGraph>();
            while !bracket.is_exhausted() {
                let slot = bracket.next_slot()?;
                let cell = match slot.kind {
                    SlotKind::Fresh => c.propose_new(slot.budget, rng, &HashSet::new())?,
                    SlotKind::Promoted(cell) => cell,
                };
                let evaluation = c.tracker.evaluate(&cell, slot.budget)?;
                let timestamp = c.feedback(&cell, slot.budget, evaluation.validation)?;
                bracket.report(slot.rung, cell, evaluation.validation, timestamp)?;
                if c.tracker.done() {
                    break 'search;
                }
            }
        }
        let outcome = c.tracker.finish();
        for e in &outcome.log {
            let level = engine.ladder.level_of(e.budget).expect("oracle budgets are on the ladder");
            examples.push(Example::new(GraphInput::from_cell(&e.cell, level), e.evaluation.validation)?);
        }
        let best = outcome
            .log
            .iter()
            .filter(|e| e.budget == top)
            .map(|e| e.evaluation.validation)
            .fold(f64::NEG_INFINITY, f64::max);
        let best = if best.is_finite() {
            best
        } else {
            outcome.log.iter().map(|e| e.evaluation.validation).fold(0.0, f64::max)
        };
        tops.push((1.0 - best, outcome.log.len()));
    }

    let mut params = PredictorParams::init(engine.train.arch, predictor_seed)?;
    let mean = examples.iter().map(|e| e.label).sum::<f64>() / examples.len() as f64;
    params.set_output_prior(mean);
    let train_config = TrainConfig {
        seed: derive_seed(predictor_seed, 1),
        epochs: config.fit_epochs,
        learning_rate: config.fit_learning_rate,
        ..engine.train
    };
    train(&mut params, &examples, &train_config)?;

    let domain = oracle.domain();
    let top_level = engine.ladder.levels() - 1;
    let mut rows = Vec::with_capacity(fixed_graphs.len());
    for (graph_id, (skip, (top_error, evaluations))) in fixed_graphs.iter().zip(tops).enumerate() {
        let cells: Vec<CellGraph> = (0..config.assignment_samples)
            .map(|_| {
                let ops = (0..skip.n_nodes()).map(|_| domain.ops()[rng.random_range(0..domain.len())]).collect();
                CellGraph::new(skip.clone(), ops)
            })
            .collect::<Result<_, _>>()?;
        let scores = rank_candidates(&params, &cells, top_level)?;
        let avg_error = scores.iter().map(|(_, s)| 1.0 - s).sum::<f64>() / scores.len() as f64;
        rows.push(StabilityRow { graph_id, skip: skip.clone(), avg_error, top_error, evaluations });
    }
    Ok(rows)
}
