//! Line-oriented `key = value` settings covering every tunable default.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::baselines::EvolutionConfig;
use crate::benchmark::{Oracle, OracleSpec};
use crate::engine::{EngineConfig, StabilityConfig};
use crate::search_space::DropBlocker;

use super::HarnessError;

/// Where oracle scores come from.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleSource {
    /// `synth:n<nodes>[:k<ops>|:kall][:s<seed>][:noise<sd>]`
    Synth(OracleSpec),
    /// `file:<path>` of records written by `bench gen`.
    File(PathBuf),
}

impl Default for OracleSource {
    fn default() -> Self {
        OracleSource::Synth(OracleSpec::default())
    }
}

impl FromStr for OracleSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(path) = s.strip_prefix("file:") {
            if path.is_empty() {
                return Err("file: needs a path".into());
            }
            return Ok(OracleSource::File(PathBuf::from(path)));
        }
        let rest = s
            .strip_prefix("synth:")
            .ok_or_else(|| format!("oracle `{s}` must start with synth: or file:"))?;
        let mut spec = OracleSpec::default();
        let mut saw_nodes = false;
        for part in rest.split(':') {
            let bad = || format!("bad oracle field `{part}`");
            if let Some(v) = part.strip_prefix("noise") {
                spec.noise_sd = v.parse().map_err(|_| bad())?;
            } else if let Some(v) = part.strip_prefix('n') {
                spec.n_nodes = v.parse().map_err(|_| bad())?;
                saw_nodes = true;
            } else if part == "kall" {
                spec.n_ops = None;
            } else if let Some(v) = part.strip_prefix('k') {
                spec.n_ops = Some(v.parse().map_err(|_| bad())?);
            } else if let Some(v) = part.strip_prefix('s') {
                spec.seed = v.parse().map_err(|_| bad())?;
            } else {
                return Err(bad());
            }
        }
        if !saw_nodes {
            return Err("synth oracle needs a node count, e.g. synth:n4".into());
        }
        Ok(OracleSource::Synth(spec))
    }
}

impl fmt::Display for OracleSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleSource::File(p) => write!(f, "file:{}", p.display()),
            OracleSource::Synth(spec) => {
                write!(f, "synth:n{}", spec.n_nodes)?;
                match spec.n_ops {
                    Some(k) => write!(f, ":k{k}")?,
                    None => write!(f, ":kall")?,
                }
                write!(f, ":s{}:noise{}", spec.seed, spec.noise_sd)
            }
        }
    }
}

/// Every knob of the harness and the modules it drives.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub oracle: OracleSource,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads for independent trials; 0 uses all cores.
    pub threads: usize,
    /// Simulated epochs per trial.
    pub max_cost: u64,
    pub grid_points: usize,
    /// Sample-efficiency runs stop after this many full-evaluation equivalents.
    pub efficiency_cap: u64,
    pub engine: EngineConfig,
    pub evolution: EvolutionConfig,
    pub stability_graphs: usize,
    pub stability_evals_per_graph: usize,
    pub stability_assignment_samples: usize,
    pub stability_fit_epochs: usize,
    pub stability_fit_learning_rate: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let stability = StabilityConfig::default();
        Self {
            oracle: OracleSource::default(),
            trials: 100,
            seed: 0,
            threads: 1,
            max_cost: 20_000,
            grid_points: 100,
            efficiency_cap: 3_000,
            engine: EngineConfig::default(),
            evolution: EvolutionConfig::default(),
            stability_graphs: 5,
            stability_evals_per_graph: stability.evals_per_graph,
            stability_assignment_samples: stability.assignment_samples,
            stability_fit_epochs: stability.fit_epochs,
            stability_fit_learning_rate: stability.fit_learning_rate,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("invalid value `{value}` for {key}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("invalid value `{value}` for {key}")),
    }
}

/// `inf` disables the predictor filter.
fn parse_warmup(value: &str) -> Result<usize, String> {
    if value == "inf" {
        Ok(usize::MAX)
    } else {
        parse("engine.warmup_evals", value)
    }
}

impl Settings {
    /// Applies one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let e = &mut self.engine;
        let t = &mut e.train;
        match key {
            "oracle" => self.oracle = value.parse()?,
            "trials" => self.trials = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "max_cost" => self.max_cost = parse(key, value)?,
            "grid_points" => self.grid_points = parse(key, value)?,
            "efficiency_cap" => self.efficiency_cap = parse(key, value)?,
            "engine.warmup_evals" => e.warmup_evals = parse_warmup(value)?,
            "engine.filter_pool" => e.filter_pool = parse(key, value)?,
            "engine.filter_quantile" => e.filter_quantile = parse(key, value)?,
            "engine.retrain_every" => e.retrain_every = parse(key, value)?,
            "engine.initial_epochs" => e.initial_epochs = parse(key, value)?,
            "engine.refit_window" => e.refit_window = parse(key, value)?,
            "engine.alternate" => e.alternate = parse_bool(key, value)?,
            "engine.dedup_retries" => e.dedup_retries = parse(key, value)?,
            "tpe.n_min" => e.split.n_min = parse(key, value)?,
            "tpe.q" => e.split.q = parse(key, value)?,
            "tpe.alpha_quantile" => e.split.alpha_quantile = parse(key, value)?,
            "tpe.n_samples" => e.split.n_samples = parse(key, value)?,
            "tpe.bandwidth_factor" => e.split.bandwidth_factor = parse(key, value)?,
            "tpe.rho" => e.split.rho = parse(key, value)?,
            "ladder.min_budget" => e.ladder.min_budget = parse(key, value)?,
            "ladder.max_budget" => e.ladder.max_budget = parse(key, value)?,
            "ladder.eta" => e.ladder.eta = parse(key, value)?,
            "blocker.rate0" | "blocker.decay" => {
                let v: f64 = parse(key, value)?;
                let (rate0, decay) = if key == "blocker.rate0" {
                    (v, e.drop_blocker.decay())
                } else {
                    (e.drop_blocker.rate0(), v)
                };
                e.drop_blocker = DropBlocker::new(rate0, decay)
                    .ok_or_else(|| format!("invalid value `{value}` for {key}"))?;
            }
            "predictor.learning_rate" => t.learning_rate = parse(key, value)?,
            "predictor.momentum" => t.momentum = parse(key, value)?,
            "predictor.epochs" => t.epochs = parse(key, value)?,
            "predictor.batch_size" => t.batch_size = parse(key, value)?,
            "predictor.gcn_layers" => t.arch.gcn_layers = parse(key, value)?,
            "predictor.d_emb" => t.arch.d_emb = parse(key, value)?,
            "predictor.d_ep" => t.arch.d_ep = parse(key, value)?,
            "predictor.hidden" => t.arch.hidden = parse(key, value)?,
            "predictor.mlp_hidden" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                let [a, b] = parts[..] else {
                    return Err(format!("{key} takes two comma-separated widths"));
                };
                t.arch.mlp_hidden = [parse(key, a)?, parse(key, b)?];
            }
            "evolution.population_size" => self.evolution.population_size = parse(key, value)?,
            "evolution.tournament_size" => self.evolution.tournament_size = parse(key, value)?,
            "stability.graphs" => self.stability_graphs = parse(key, value)?,
            "stability.evals_per_graph" => self.stability_evals_per_graph = parse(key, value)?,
            "stability.assignment_samples" => self.stability_assignment_samples = parse(key, value)?,
            "stability.fit_epochs" => self.stability_fit_epochs = parse(key, value)?,
            "stability.fit_learning_rate" => self.stability_fit_learning_rate = parse(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Applies a whole settings file on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), HarnessError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| HarnessError::Config { line: i + 1, reason };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            self.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        let mut s = Self::default();
        s.apply_text(text)?;
        Ok(s)
    }

    /// Renders every key; [`Settings::from_text`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let e = &self.engine;
        let t = &e.train;
        let warmup = if e.warmup_evals == usize::MAX { "inf".to_string() } else { e.warmup_evals.to_string() };
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| {
            writeln!(out, "{k} = {v}").expect("writing to a string");
        };
        kv("oracle", &self.oracle);
        kv("trials", &self.trials);
        kv("seed", &self.seed);
        kv("threads", &self.threads);
        kv("max_cost", &self.max_cost);
        kv("grid_points", &self.grid_points);
        kv("efficiency_cap", &self.efficiency_cap);
        kv("engine.warmup_evals", &warmup);
        kv("engine.filter_pool", &e.filter_pool);
        kv("engine.filter_quantile", &e.filter_quantile);
        kv("engine.retrain_every", &e.retrain_every);
        kv("engine.initial_epochs", &e.initial_epochs);
        kv("engine.refit_window", &e.refit_window);
        kv("engine.alternate", &e.alternate);
        kv("engine.dedup_retries", &e.dedup_retries);
        kv("tpe.n_min", &e.split.n_min);
        kv("tpe.q", &e.split.q);
        kv("tpe.alpha_quantile", &e.split.alpha_quantile);
        kv("tpe.n_samples", &e.split.n_samples);
        kv("tpe.bandwidth_factor", &e.split.bandwidth_factor);
        kv("tpe.rho", &e.split.rho);
        kv("ladder.min_budget", &e.ladder.min_budget);
        kv("ladder.max_budget", &e.ladder.max_budget);
        kv("ladder.eta", &e.ladder.eta);
        kv("blocker.rate0", &e.drop_blocker.rate0());
        kv("blocker.decay", &e.drop_blocker.decay());
        kv("predictor.learning_rate", &t.learning_rate);
        kv("predictor.momentum", &t.momentum);
        kv("predictor.epochs", &t.epochs);
        kv("predictor.batch_size", &t.batch_size);
        kv("predictor.gcn_layers", &t.arch.gcn_layers);
        kv("predictor.d_emb", &t.arch.d_emb);
        kv("predictor.d_ep", &t.arch.d_ep);
        kv("predictor.hidden", &t.arch.hidden);
        kv("predictor.mlp_hidden", &format!("{},{}", t.arch.mlp_hidden[0], t.arch.mlp_hidden[1]));
        kv("evolution.population_size", &self.evolution.population_size);
        kv("evolution.tournament_size", &self.evolution.tournament_size);
        kv("stability.graphs", &self.stability_graphs);
        kv("stability.evals_per_graph", &self.stability_evals_per_graph);
        kv("stability.assignment_samples", &self.stability_assignment_samples);
        kv("stability.fit_epochs", &self.stability_fit_epochs);
        kv("stability.fit_learning_rate", &self.stability_fit_learning_rate);
        out
    }

    /// The engine configuration with its ladder and epoch embedding matched
    /// to `oracle`.
    pub fn engine_for(&self, oracle: &dyn Oracle) -> EngineConfig {
        let mut engine = self.engine.clone();
        engine.ladder = *oracle.ladder();
        engine.train.arch.levels = engine.train.arch.levels.max(engine.ladder.levels());
        engine
    }

    pub fn stability_for(&self, oracle: &dyn Oracle) -> StabilityConfig {
        StabilityConfig {
            engine: EngineConfig { warmup_evals: usize::MAX, ..self.engine_for(oracle) },
            evals_per_graph: self.stability_evals_per_graph,
            assignment_samples: self.stability_assignment_samples,
            fit_epochs: self.stability_fit_epochs,
            fit_learning_rate: self.stability_fit_learning_rate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_strings_round_trip() {
        for s in ["synth:n4:k3:s7:noise0.01", "synth:n2:kall:s0:noise0", "file:/tmp/x.txt"] {
            let parsed: OracleSource = s.parse().unwrap();
            assert_eq!(parsed.to_string(), s);
        }
        let short: OracleSource = "synth:n5".parse().unwrap();
        let OracleSource::Synth(spec) = short else { panic!() };
        assert_eq!((spec.n_nodes, spec.n_ops, spec.seed), (5, Some(3), 0));
        assert!("synth:k3".parse::<OracleSource>().is_err());
        assert!("synth:n4:x1".parse::<OracleSource>().is_err());
        assert!("bench:n4".parse::<OracleSource>().is_err());
    }

    #[test]
    fn defaults_round_trip() {
        let d = Settings::default();
        assert_eq!(Settings::from_text(&d.to_text()).unwrap(), d);
        let mut changed = d.clone();
        changed.engine.warmup_evals = usize::MAX;
        changed.engine.train.arch.mlp_hidden = [8, 4];
        changed.engine.drop_blocker = DropBlocker::new(0.5, 0.9).unwrap();
        assert_eq!(Settings::from_text(&changed.to_text()).unwrap(), changed);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = Settings::from_text("trials = 3\n\n# note\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, HarnessError::Config { line: 4, .. }), "{err}");
        let err = Settings::from_text("trials three").unwrap_err();
        assert!(matches!(err, HarnessError::Config { line: 1, .. }));
        assert!(Settings::from_text("blocker.decay = 0").is_err());
        assert!(Settings::from_text("engine.alternate = maybe").is_err());
    }
}
