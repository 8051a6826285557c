//! Experiment runner behind the command-line interface: multi-trial regret
//! comparisons, sample-efficiency studies, stability tables and CSV output.
//!
//! Every trial is seeded with `seed + trial_index`, so results do not depend
//! on the number of worker threads.

pub mod cli;
pub mod config;
pub mod plot;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::index::sample;
use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{hyperband, pure_tpe, random_cell, random_search, regularized_evolution};
use crate::benchmark::{BenchError, Oracle, RecordOracle, SyntheticOracle};
use crate::engine::{run_search, run_stability_study, EngineError, SearchOutcome, StabilityRow, StopRule};
use crate::metrics;
use crate::predictor::{train, Example, GraphInput, PredictorError, PredictorParams, TrainConfig};
use crate::search_space::SkipPattern;
use crate::seeding::{derive_seed, rng_from_seed};

pub use config::{OracleSource, Settings};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("no traces to aggregate")]
    NoTraces,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("predictor: {0}")]
    Predictor(#[from] PredictorError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Gpnas,
    Rs,
    Re,
    Hb,
    Tpe,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::Gpnas, Algorithm::Rs, Algorithm::Re, Algorithm::Hb, Algorithm::Tpe];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gpnas => "gpnas",
            Algorithm::Rs => "rs",
            Algorithm::Re => "re",
            Algorithm::Hb => "hb",
            Algorithm::Tpe => "tpe",
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Algorithm>, HarnessError> {
        s.split(',').map(|a| a.trim().parse()).collect()
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| HarnessError::Invalid(format!("unknown algorithm `{s}` (expected gpnas, rs, re, hb or tpe)")))
    }
}

/// Builds the oracle named by `source`; synthetic oracles use the ladder from
/// `settings`.
pub fn load_oracle(source: &OracleSource, settings: &Settings) -> Result<Box<dyn Oracle>, HarnessError> {
    Ok(match source {
        OracleSource::Synth(spec) => {
            let mut spec = spec.clone();
            spec.ladder = settings.engine.ladder;
            Box::new(SyntheticOracle::new(spec)?)
        }
        OracleSource::File(path) => Box::new(RecordOracle::load(path)?),
    })
}

/// One search with the trial's own seed.
pub fn run_trial(
    algorithm: Algorithm,
    settings: &Settings,
    oracle: &dyn Oracle,
    stop: &StopRule,
    trial: u64,
) -> Result<SearchOutcome, HarnessError> {
    let mut rng = rng_from_seed(settings.seed.wrapping_add(trial));
    Ok(match algorithm {
        Algorithm::Gpnas => run_search(&settings.engine_for(oracle), oracle, stop, &mut rng)?.search,
        Algorithm::Rs => random_search(oracle, stop, &mut rng)?,
        Algorithm::Re => regularized_evolution(settings.evolution, oracle, stop, &mut rng)?,
        Algorithm::Hb => hyperband(oracle, stop, &mut rng)?,
        Algorithm::Tpe => pure_tpe(&settings.engine.split, oracle, stop, &mut rng)?,
    })
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Invalid(format!("thread pool: {e}")))
}

/// `settings.trials` independent searches, returned in trial order.
pub fn run_trials(
    algorithm: Algorithm,
    settings: &Settings,
    oracle: &dyn Oracle,
    stop: &StopRule,
) -> Result<Vec<SearchOutcome>, HarnessError> {
    if settings.trials == 0 {
        return Err(HarnessError::Invalid("trials must be at least 1".into()));
    }
    thread_pool(settings.threads)?.install(|| {
        (0..settings.trials as u64)
            .into_par_iter()
            .map(|t| run_trial(algorithm, settings, oracle, stop, t))
            .collect()
    })
}

/// Pointwise statistics of step-interpolated traces on a cost grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Bands {
    pub grid: Vec<u64>,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
}

/// `n` evenly spaced checkpoints ending at `max_cost`.
pub fn cost_grid(max_cost: u64, n: usize) -> Vec<u64> {
    let n = n.max(1) as u64;
    (1..=n).map(|i| max_cost * i / n).collect()
}

/// Best validation accuracy reached by cost `c` (0 before any top-budget
/// evaluation).
pub fn best_at(trace: &crate::engine::RegretTrace, c: u64) -> f64 {
    let idx = trace.steps.partition_point(|s| s.cum_epochs <= c);
    if idx == 0 {
        0.0
    } else {
        trace.steps[idx - 1].best_val
    }
}

/// Regret `reference - best` of every trace at every checkpoint, then the
/// mean, median and quartiles across traces.
pub fn aggregate_traces(
    traces: &[crate::engine::RegretTrace],
    grid: &[u64],
    reference: f64,
) -> Result<Bands, HarnessError> {
    if traces.is_empty() {
        return Err(HarnessError::NoTraces);
    }
    let mut bands = Bands { grid: grid.to_vec(), mean: vec![], median: vec![], q25: vec![], q75: vec![] };
    for &c in grid {
        let regrets: Vec<f64> = traces.iter().map(|t| reference - best_at(t, c)).collect();
        bands.mean.push(metrics::mean(&regrets));
        bands.median.push(metrics::median(&regrets));
        bands.q25.push(metrics::quantile(&regrets, 0.25));
        bands.q75.push(metrics::quantile(&regrets, 0.75));
    }
    Ok(bands)
}

/// Results of a multi-algorithm regret study.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<(Algorithm, Vec<SearchOutcome>)>,
    /// Accuracy regret is measured against.
    pub reference: f64,
    /// Whether `reference` is the oracle's true optimum rather than the best
    /// observation across all runs.
    pub exact_reference: bool,
    pub bands: Vec<(Algorithm, Bands)>,
}

pub fn compare(algorithms: &[Algorithm], settings: &Settings, oracle: &dyn Oracle) -> Result<Comparison, HarnessError> {
    let stop = StopRule::cost(settings.max_cost);
    let runs = algorithms
        .iter()
        .map(|&a| Ok((a, run_trials(a, settings, oracle, &stop)?)))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let (reference, exact_reference) = match oracle.optimum() {
        Some(o) => (o.validation, true),
        None => {
            let best = runs
                .iter()
                .flat_map(|(_, outs)| outs.iter())
                .filter_map(|o| o.best.as_ref().map(|(_, e)| e.validation))
                .fold(0.0, f64::max);
            (best, false)
        }
    };
    let grid = cost_grid(settings.max_cost, settings.grid_points);
    let bands = runs
        .iter()
        .map(|(a, outs)| {
            let traces: Vec<_> = outs.iter().map(|o| o.trace.clone()).collect();
            Ok((*a, aggregate_traces(&traces, &grid, reference)?))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(Comparison { runs, reference, exact_reference, bands })
}

pub const TRACE_HEADER: &str = "trial,step,cum_epochs,best_val_acc,best_test_acc";
pub const SUMMARY_HEADER: &str = "algo,cum_epochs,mean_regret,median_regret,q25,q75";

pub fn write_traces<W: Write>(outcomes: &[SearchOutcome], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for (trial, o) in outcomes.iter().enumerate() {
        for (step, s) in o.trace.steps.iter().enumerate() {
            writeln!(out, "{trial},{},{},{:.6},{:.6}", step + 1, s.cum_epochs, s.best_val, s.best_test)?;
        }
    }
    Ok(())
}

/// The summary CSV. Without an exact optimum a leading `#` line records the
/// regret reference.
pub fn write_summary<W: Write>(comparison: &Comparison, mut out: W) -> std::io::Result<()> {
    if !comparison.exact_reference {
        writeln!(out, "# regret relative to best observed validation accuracy {:.6}", comparison.reference)?;
    }
    writeln!(out, "{SUMMARY_HEADER}")?;
    for (a, b) in &comparison.bands {
        for i in 0..b.grid.len() {
            writeln!(
                out,
                "{a},{},{:.6},{:.6},{:.6},{:.6}",
                b.grid[i], b.mean[i], b.median[i], b.q25[i], b.q75[i]
            )?;
        }
    }
    Ok(())
}

/// Oracle queries until the global optimum is first evaluated at the top
/// budget, in full-evaluation equivalents (simulated epochs divided by the
/// top budget). `None` when the cap ran out first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyTrial {
    pub equivalents: Option<f64>,
    pub queries: Option<usize>,
}

impl EfficiencyTrial {
    /// Censored trials rank after every success.
    pub fn score(&self) -> f64 {
        self.equivalents.unwrap_or(f64::INFINITY)
    }
}

pub fn efficiency_trials(
    algorithm: Algorithm,
    settings: &Settings,
    oracle: &dyn Oracle,
) -> Result<Vec<EfficiencyTrial>, HarnessError> {
    if oracle.optimum().is_none() {
        return Err(HarnessError::Invalid("sample efficiency needs an exhaustive oracle".into()));
    }
    let top = oracle.max_budget() as u64;
    let stop = StopRule {
        max_cost: Some(settings.efficiency_cap.saturating_mul(top)),
        until_optimum: true,
        ..StopRule::default()
    };
    Ok(run_trials(algorithm, settings, oracle, &stop)?
        .iter()
        .map(|o| EfficiencyTrial {
            equivalents: o.optimum_hit.map(|h| o.trace.steps[h - 1].cum_epochs as f64 / top as f64),
            queries: o.optimum_hit,
        })
        .collect())
}

pub const EFFICIENCY_HEADER: &str = "algo,trial,equivalents,queries";

pub fn write_efficiency<W: Write>(runs: &[(Algorithm, Vec<EfficiencyTrial>)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{EFFICIENCY_HEADER}")?;
    for (a, trials) in runs {
        for (i, t) in trials.iter().enumerate() {
            let eq = t.equivalents.map_or("NA".into(), |v| format!("{v:.4}"));
            let q = t.queries.map_or("NA".into(), |v| v.to_string());
            writeln!(out, "{a},{i},{eq},{q}")?;
        }
    }
    Ok(())
}

/// Median of trial scores; infinite when more than half are censored.
pub fn median_score(trials: &[EfficiencyTrial]) -> f64 {
    let mut v: Vec<f64> = trials.iter().map(EfficiencyTrial::score).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a.is_infinite() || b.is_infinite() {
            a.max(b)
        } else {
            (a + b) / 2.0
        }
    }
}

/// `count` distinct skip patterns, reproducibly drawn from `seed`.
pub fn pick_graphs(n_nodes: usize, count: usize, seed: u64) -> Result<Vec<SkipPattern>, HarnessError> {
    let all = SkipPattern::enumerate(n_nodes).map_err(|e| HarnessError::Invalid(e.to_string()))?;
    if count == 0 || count > all.len() {
        return Err(HarnessError::Invalid(format!("need 1..={} graphs, got {count}", all.len())));
    }
    let mut rng = rng_from_seed(derive_seed(seed, 0x57AB));
    let mut idx = sample(&mut rng, all.len(), count).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| all[i].clone()).collect())
}

pub fn stability(
    graphs: &[SkipPattern],
    settings: &Settings,
    oracle: &dyn Oracle,
) -> Result<Vec<StabilityRow>, HarnessError> {
    let mut rng = rng_from_seed(settings.seed);
    Ok(run_stability_study(graphs, &settings.stability_for(oracle), oracle, &mut rng)?)
}

pub const STABILITY_HEADER: &str = "graph_id,skip,avg_error,top_error,gap,evaluations";

pub fn write_stability<W: Write>(rows: &[StabilityRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{STABILITY_HEADER}")?;
    for r in rows {
        let bits: String = r.skip.edges().iter().map(|&e| if e { '1' } else { '0' }).collect();
        writeln!(
            out,
            "{},{bits},{:.6},{:.6},{:.6},{}",
            r.graph_id,
            r.avg_error,
            r.top_error,
            r.gap(),
            r.evaluations
        )?;
    }
    Ok(())
}

/// Trains a predictor on `samples` uniformly drawn cells, each scored at a
/// uniformly drawn ladder budget.
pub fn fit_predictor(
    oracle: &dyn Oracle,
    samples: usize,
    config: &TrainConfig,
    seed: u64,
) -> Result<PredictorParams, HarnessError> {
    if samples == 0 {
        return Err(HarnessError::Invalid("samples must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let budgets = oracle.ladder().budgets();
    let mut data = Vec::with_capacity(samples);
    for _ in 0..samples {
        let cell = random_cell(oracle.n_nodes(), oracle.domain(), &mut rng)?;
        let level = rand::Rng::random_range(&mut rng, 0..budgets.len());
        let e = oracle.evaluate(&cell, budgets[level])?;
        data.push(Example::new(GraphInput::from_cell(&cell, level), e.validation)?);
    }
    let mut config = *config;
    config.arch.levels = config.arch.levels.max(budgets.len());
    config.seed = derive_seed(seed, 1);
    let mut params = PredictorParams::init(config.arch, config.seed)?;
    params.set_output_prior(data.iter().map(|e| e.label).sum::<f64>() / data.len() as f64);
    train(&mut params, &data, &config)?;
    Ok(params)
}
