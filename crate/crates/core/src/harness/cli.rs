use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::baselines::random_cell;
use crate::benchmark::{enumerate_cells, save_records, SyntheticOracle};
use crate::engine::StopRule;
use crate::metrics;
use crate::predictor::{load_params, predict_batch, rank_candidates, save_params, GraphInput};
use crate::seeding::rng_from_seed;

use super::config::{OracleSource, Settings};
use super::{
    compare, efficiency_trials, fit_predictor, load_oracle, median_score, pick_graphs, plot, run_trial, stability,
    write_efficiency, write_stability, write_summary, write_traces, Algorithm, HarnessError,
};

#[derive(Debug, Parser)]
#[command(name = "gpnas", version, about = "Alternating BOHB architecture search with a GCN predictor filter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Settings file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// synth:n<nodes>[:k<ops>|:kall][:s<seed>][:noise<sd>] or file:<path>
    #[arg(long)]
    oracle: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    /// Extra setting, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one search, print the best cell and optionally write its trace.
    Search {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "gpnas")]
        algo: String,
        #[arg(long)]
        max_cost: Option<u64>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Multi-trial regret comparison.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "gpnas,rs,re,hb,tpe")]
        algos: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        max_cost: Option<u64>,
        /// Output directory for traces_<algo>.csv and summary.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write regret.svg.
        #[arg(long)]
        plot: bool,
    },
    /// Evaluations needed to reach the global optimum.
    Efficiency {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "gpnas,rs,re")]
        algos: String,
        #[arg(long)]
        trials: Option<usize>,
        /// Cap in full-evaluation equivalents.
        #[arg(long)]
        cap: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Operator-only searches on fixed skip patterns.
    Stability {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graphs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Oracle record files.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
    /// Standalone predictor training and ranking.
    Predictor {
        #[command(subcommand)]
        command: PredictorCommand,
    },
    /// Print every setting with its default value.
    Defaults,
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Write every cell of a synthetic oracle with its per-budget accuracies.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum PredictorCommand {
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        params: PathBuf,
        /// Cells listed from the top of the predicted ranking.
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Random cells scored when the oracle is not exhaustive.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
}

fn settings(common: &Common) -> Result<Settings, HarnessError> {
    let mut s = Settings::default();
    if let Some(path) = &common.config {
        s.apply_text(&fs::read_to_string(path)?)?;
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| HarnessError::Invalid(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        s.set(k.trim(), v.trim()).map_err(HarnessError::Invalid)?;
    }
    if let Some(o) = &common.oracle {
        s.oracle = o.parse().map_err(HarnessError::Invalid)?;
    }
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    if let Some(t) = common.threads {
        s.threads = t;
    }
    Ok(s)
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn cli_main<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(stdout, "{}", e.render());
            return 0;
        }
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            let _ = writeln!(stderr, "valid flags: {}", valid_flags(&args).join(" "));
            return 2;
        }
    };
    match run(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

/// Long flags of the deepest subcommand named in `args`.
fn valid_flags(args: &[OsString]) -> Vec<String> {
    let mut cmd = Cli::command();
    for a in args.iter().skip(1) {
        let Some(name) = a.to_str() else { break };
        match cmd.find_subcommand(name) {
            Some(sub) => cmd = sub.clone(),
            None => break,
        }
    }
    let mut flags: Vec<String> = cmd.get_arguments().filter_map(|a| a.get_long()).map(|l| format!("--{l}")).collect();
    flags.extend(cmd.get_subcommands().map(|c| c.get_name().to_string()));
    flags
}

fn run(command: Command, out: &mut dyn Write) -> Result<(), HarnessError> {
    match command {
        Command::Defaults => write!(out, "{}", Settings::default().to_text())?,
        Command::Search { common, algo, max_cost, trace } => {
            let mut s = settings(&common)?;
            if let Some(c) = max_cost {
                s.max_cost = c;
            }
            let algo: Algorithm = algo.parse()?;
            let oracle = load_oracle(&s.oracle, &s)?;
            let outcome = run_trial(algo, &s, oracle.as_ref(), &StopRule::cost(s.max_cost), 0)?;
            match &outcome.best {
                Some((cell, e)) => writeln!(out, "best {cell} validation {:.6} test {:.6}", e.validation, e.test)?,
                None => writeln!(out, "no top-budget evaluation within {} epochs", s.max_cost)?,
            }
            if let Some(o) = oracle.optimum() {
                writeln!(out, "optimum {} validation {:.6}", o.cell, o.validation)?;
            }
            writeln!(out, "evaluations {} epochs {}", outcome.log.len(), outcome.total_epochs())?;
            if let Some(path) = trace {
                let mut f = create(&path)?;
                write_traces(std::slice::from_ref(&outcome), &mut f)?;
                f.flush()?;
            }
        }
        Command::Compare { common, algos, trials, max_cost, out: dir, plot: want_plot } => {
            let mut s = settings(&common)?;
            s.trials = trials.unwrap_or(s.trials);
            s.max_cost = max_cost.unwrap_or(s.max_cost);
            let algos = Algorithm::parse_list(&algos)?;
            let oracle = load_oracle(&s.oracle, &s)?;
            let cmp = compare(&algos, &s, oracle.as_ref())?;
            fs::create_dir_all(&dir)?;
            for (a, outs) in &cmp.runs {
                let mut f = create(&dir.join(format!("traces_{a}.csv")))?;
                write_traces(outs, &mut f)?;
                f.flush()?;
            }
            let mut f = create(&dir.join("summary.csv"))?;
            write_summary(&cmp, &mut f)?;
            f.flush()?;
            if want_plot {
                fs::write(dir.join("regret.svg"), plot::regret_svg(&cmp.bands))?;
            }
            writeln!(out, "algo  final_mean_regret  final_median_regret")?;
            for (a, b) in &cmp.bands {
                let last = b.mean.len() - 1;
                writeln!(out, "{a:5} {:.6}  {:.6}", b.mean[last], b.median[last])?;
            }
        }
        Command::Efficiency { common, algos, trials, cap, out: dir } => {
            let mut s = settings(&common)?;
            s.trials = trials.unwrap_or(s.trials);
            s.efficiency_cap = cap.unwrap_or(s.efficiency_cap);
            let algos = Algorithm::parse_list(&algos)?;
            let oracle = load_oracle(&s.oracle, &s)?;
            let runs = algos
                .iter()
                .map(|&a| Ok((a, efficiency_trials(a, &s, oracle.as_ref())?)))
                .collect::<Result<Vec<_>, HarnessError>>()?;
            fs::create_dir_all(&dir)?;
            let mut f = create(&dir.join("efficiency.csv"))?;
            write_efficiency(&runs, &mut f)?;
            f.flush()?;
            let first: Vec<f64> = runs[0].1.iter().map(|t| t.score()).collect();
            writeln!(out, "algo  hits  median  p_first_smaller")?;
            for (a, trials) in &runs {
                let hits = trials.iter().filter(|t| t.equivalents.is_some()).count();
                let scores: Vec<f64> = trials.iter().map(|t| t.score()).collect();
                writeln!(
                    out,
                    "{a:5} {hits}/{}  {:.1}  {:.4}",
                    trials.len(),
                    median_score(trials),
                    metrics::mann_whitney_less(&first, &scores)
                )?;
            }
        }
        Command::Stability { common, graphs, out: path } => {
            let mut s = settings(&common)?;
            s.stability_graphs = graphs.unwrap_or(s.stability_graphs);
            let oracle = load_oracle(&s.oracle, &s)?;
            let fixed = pick_graphs(oracle.n_nodes(), s.stability_graphs, s.seed)?;
            let rows = stability(&fixed, &s, oracle.as_ref())?;
            write_stability(&rows, &mut *out)?;
            if let Some(path) = path {
                let mut f = create(&path)?;
                write_stability(&rows, &mut f)?;
                f.flush()?;
            }
        }
        Command::Bench { command: BenchCommand::Gen { common, out: path } } => {
            let s = settings(&common)?;
            let OracleSource::Synth(mut spec) = s.oracle.clone() else {
                return Err(HarnessError::Invalid("bench gen needs a synth: oracle".into()));
            };
            spec.ladder = s.engine.ladder;
            let records = SyntheticOracle::new(spec)?.enumerate_space()?;
            save_records(&records, &path)?;
            writeln!(out, "wrote {} records to {}", records.len(), path.display())?;
        }
        Command::Predictor { command: PredictorCommand::Fit { common, samples, out: path } } => {
            let s = settings(&common)?;
            let oracle = load_oracle(&s.oracle, &s)?;
            let mut config = s.engine.train;
            config.epochs = s.engine.train.epochs.max(1);
            let params = fit_predictor(oracle.as_ref(), samples, &config, s.seed)?;
            save_params(&params, &path)?;
            writeln!(out, "trained on {samples} samples, saved to {}", path.display())?;
        }
        Command::Predictor { command: PredictorCommand::Eval { common, params, top, samples } } => {
            let s = settings(&common)?;
            let oracle = load_oracle(&s.oracle, &s)?;
            let params = load_params(&params)?;
            let cells = if oracle.optimum().is_some() {
                enumerate_cells(oracle.n_nodes(), oracle.domain())?
            } else {
                let mut rng = rng_from_seed(s.seed);
                (0..samples)
                    .map(|_| random_cell(oracle.n_nodes(), oracle.domain(), &mut rng))
                    .collect::<Result<Vec<_>, _>>()?
            };
            let level = oracle.ladder().levels() - 1;
            let inputs: Vec<GraphInput> = cells.iter().map(|c| GraphInput::from_cell(c, level)).collect();
            let preds = predict_batch(&params, &inputs)?;
            let truth = cells
                .iter()
                .map(|c| Ok(oracle.evaluate(c, oracle.max_budget())?.validation))
                .collect::<Result<Vec<f64>, HarnessError>>()?;
            let mse = metrics::mean(&preds.iter().zip(&truth).map(|(p, t)| (p - t).powi(2)).collect::<Vec<_>>());
            writeln!(out, "cells {} kendall_tau {:.4} mse {:.6}", cells.len(), metrics::kendall_tau(&preds, &truth), mse)?;
            for (cell, score) in rank_candidates(&params, &cells, level)?.into_iter().take(top) {
                writeln!(out, "{cell} {score:.6}")?;
            }
        }
    }
    Ok(())
}
