//! Evaluation oracles standing in for child-model training.
//!
//! [`SyntheticOracle`] is a deterministic tabular benchmark: every
//! `(cell, budget)` maps to a fixed validation accuracy derived from stable
//! hashes of the cell's structure and the oracle seed. [`RecordOracle`] serves
//! lookups from a record file, the adapter seam for exported benchmark tables.
//!
//! Record files are line-oriented UTF-8 text, one cell per line:
//!
//! ```text
//! <cell-encoding>\t<budget>=<acc>;<budget>=<acc>;...\t<test-acc>
//! ```
//!
//! Accuracies use Rust's shortest round-trip float formatting, so a
//! write-then-load cycle reproduces every value bit for bit.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::OnceLock;

use thiserror::Error;

use crate::bohb::BudgetLadder;
use crate::search_space::{
    CellGraph, GeneralizedOp, OpDomain, SkipPattern, SpaceError, MAX_NODES, NUM_GENERALIZED_OPS,
};
use rand::Rng;

use crate::search_space::sample_skip_pattern;
use crate::seeding::{rng_from_seed, StableHasher};

/// Largest space `enumerate_space` will materialize.
pub const MAX_EXHAUSTIVE_CELLS: u128 = 5_000_000;

/// Largest cell size with exhaustive enumeration.
pub const MAX_EXHAUSTIVE_NODES: usize = 5;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("budget {0} is not on the oracle's ladder")]
    BudgetNotInLadder(u32),
    #[error("space has {0} cells, above the exhaustive limit")]
    SpaceTooLarge(u128),
    #[error("cell {0} is not in the benchmark")]
    UnknownCell(String),
    #[error("cell has {got} nodes but the oracle expects {expected}")]
    WrongNodeCount { expected: usize, got: usize },
    #[error("operator {0} is outside the oracle's operator domain")]
    OpOutsideDomain(GeneralizedOp),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid oracle specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Result of one simulated training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub validation: f64,
    /// Final test accuracy of the cell, independent of the queried budget.
    pub test: f64,
}

/// Best cell of an exhaustive table at the top budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub cell: CellGraph,
    pub validation: f64,
    pub test: f64,
}

/// Anything that can score a cell at a budget.
pub trait Oracle: Send + Sync {
    fn n_nodes(&self) -> usize;
    fn domain(&self) -> &OpDomain;
    fn ladder(&self) -> &BudgetLadder;
    fn evaluate(&self, cell: &CellGraph, budget: u32) -> Result<Evaluation, BenchError>;

    /// Global optimum when the space is exhaustively known.
    fn optimum(&self) -> Option<&Optimum>;

    fn max_budget(&self) -> u32 {
        self.ladder().max_budget
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec {
    pub n_nodes: usize,
    pub seed: u64,
    pub noise_sd: f64,
    pub ladder: BudgetLadder,
    /// Size of the operator domain; `None` means all 156 generalized operators.
    pub n_ops: Option<usize>,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { n_nodes: 4, seed: 0, noise_sd: 0.0, ladder: BudgetLadder::default(), n_ops: Some(3) }
    }
}

impl OracleSpec {
    pub fn domain(&self) -> Result<OpDomain, SpaceError> {
        match self.n_ops {
            None => Ok(OpDomain::full()),
            Some(k) => OpDomain::reduced(k),
        }
    }

    /// Number of cells in the space.
    pub fn cardinality(&self) -> Result<u128, BenchError> {
        let skips = if self.n_nodes <= 6 {
            SkipPattern::enumerate(self.n_nodes)?.len() as u128
        } else {
            1u128 << crate::search_space::num_edge_slots(self.n_nodes)
        };
        let k = self.n_ops.unwrap_or(NUM_GENERALIZED_OPS) as u128;
        Ok(skips * k.pow(self.n_nodes as u32))
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if !(2..=MAX_NODES).contains(&self.n_nodes) {
            return Err(BenchError::InvalidSpec(format!("n_nodes must be in 2..={MAX_NODES}")));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(BenchError::InvalidSpec("noise_sd must be a finite non-negative number".into()));
        }
        self.ladder.validate().map_err(|e| BenchError::InvalidSpec(e.to_string()))?;
        self.domain()?;
        Ok(())
    }
}

/// One row of a tabular benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub cell: CellGraph,
    pub accuracies: BTreeMap<u32, f64>,
    pub test_accuracy: f64,
}

impl BenchRecord {
    pub fn to_line(&self) -> String {
        let mut line = self.cell.encode();
        line.push('\t');
        for (i, (b, a)) in self.accuracies.iter().enumerate() {
            if i > 0 {
                line.push(';');
            }
            write!(line, "{b}={a}").expect("writing to a String");
        }
        write!(line, "\t{}", self.test_accuracy).expect("writing to a String");
        line
    }

    pub fn parse_line(line: &str, line_no: usize) -> Result<Self, BenchError> {
        let fail = |reason: String| BenchError::Parse { line: line_no, reason };
        let fields: Vec<&str> = line.split('\t').collect();
        let [cell, accs, test] = fields[..] else {
            return Err(fail(format!("expected 3 tab-separated fields, found {}", fields.len())));
        };
        let cell = CellGraph::decode(cell).map_err(|e| fail(e.to_string()))?;
        let check = |v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(fail(format!("accuracy {v} outside [0, 1]")))
            }
        };
        let mut accuracies = BTreeMap::new();
        for item in accs.split(';') {
            let (b, a) = item.split_once('=').ok_or_else(|| fail(format!("bad budget entry `{item}`")))?;
            let b: u32 = b.parse().map_err(|_| fail(format!("bad budget `{b}`")))?;
            let a: f64 = a.parse().map_err(|_| fail(format!("bad accuracy `{a}`")))?;
            if accuracies.insert(b, check(a)?).is_some() {
                return Err(fail(format!("budget {b} listed twice")));
            }
        }
        let test: f64 = test.trim_end().parse().map_err(|_| fail(format!("bad test accuracy `{test}`")))?;
        Ok(Self { cell, accuracies, test_accuracy: check(test)? })
    }
}

// Hash stream tags, one per independent random table.
const TAG_OP: u64 = 1;
const TAG_ACT: u64 = 2;
const TAG_INIT: u64 = 3;
const TAG_PAIR: u64 = 4;
const TAG_POSITION: u64 = 5;
const TAG_EDGE_TARGET: u64 = 6;
const TAG_TAU: u64 = 7;
const TAG_NOISE: u64 = 8;
const TAG_TEST: u64 = 9;
const TAG_CALIBRATION: u64 = 10;

const CALIBRATION_CELLS: usize = 2048;

const ACC_MID: f64 = 0.75;
const ACC_SLOPE: f64 = 0.06;
const POSITION_WEIGHT: f64 = 0.5;
const DEGREE_WEIGHT: f64 = 0.5;
const PAIR_WEIGHT: f64 = 0.4;
const EDGE_PENALTY: f64 = 0.1;
const TAU_BASE: f64 = 6.0;

/// Deterministic synthetic tabular benchmark.
///
/// The top-budget accuracy of a cell is `0.75 + 0.06 z` for the standardized
/// structural score `z`. The raw score sums, per node, an operator score with
/// operator x activation and operator x initialization interaction terms
/// (weighted by node position and degree), a pairwise term for every edge
/// depending on both endpoint operators, and a penalty on distance from a
/// preferred edge count. The
/// learning curve is `a_max * (1 - exp(-b / tau))` with a per-cell `tau`.
/// Noise is a hash of `(seed, cell, budget)`, so repeated queries agree.
#[derive(Debug)]
pub struct SyntheticOracle {
    spec: OracleSpec,
    domain: OpDomain,
    z_center: f64,
    z_scale: f64,
    optimum: OnceLock<Option<Optimum>>,
}

impl SyntheticOracle {
    pub fn new(spec: OracleSpec) -> Result<Self, BenchError> {
        spec.validate()?;
        let domain = spec.domain()?;
        let mut oracle = Self { spec, domain, z_center: 0.0, z_scale: 1.0, optimum: OnceLock::new() };
        oracle.calibrate()?;
        Ok(oracle)
    }

    /// Standardizes the structural score over a fixed seeded sample of cells.
    fn calibrate(&mut self) -> Result<(), BenchError> {
        let mut rng = rng_from_seed(StableHasher::new(self.spec.seed).u64(TAG_CALIBRATION).finish());
        let n = self.spec.n_nodes;
        let k = self.domain.len();
        let mut zs = Vec::with_capacity(CALIBRATION_CELLS);
        for _ in 0..CALIBRATION_CELLS {
            let skip = sample_skip_pattern(n, &mut rng)?;
            let ops = (0..n).map(|_| self.domain.ops()[rng.random_range(0..k)]).collect();
            zs.push(self.structure_score(&CellGraph::new(skip, ops)?));
        }
        let mean = zs.iter().sum::<f64>() / zs.len() as f64;
        let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / zs.len() as f64;
        self.z_center = mean;
        self.z_scale = var.sqrt().max(1e-9);
        Ok(())
    }

    pub fn spec(&self) -> &OracleSpec {
        &self.spec
    }

    fn hasher(&self, tag: u64) -> StableHasher {
        StableHasher::new(self.spec.seed).u64(tag)
    }

    fn op_score(&self, g: GeneralizedOp) -> f64 {
        let op = g.op.index() as u64;
        let base = self.hasher(TAG_OP).u64(op).symmetric();
        let act = self.hasher(TAG_ACT).u64(op).u64(g.act.index() as u64).symmetric();
        let init = self.hasher(TAG_INIT).u64(op).u64(g.init.index() as u64).symmetric();
        base + 0.6 * act + 0.6 * init
    }

    fn pair_score(&self, a: GeneralizedOp, b: GeneralizedOp) -> f64 {
        let (lo, hi) = if a.index() <= b.index() { (a, b) } else { (b, a) };
        self.hasher(TAG_PAIR).u64(lo.index() as u64).u64(hi.index() as u64).symmetric()
    }

    /// Raw structural score `z` of a cell.
    pub fn structure_score(&self, cell: &CellGraph) -> f64 {
        let n = cell.n_nodes();
        let skip = cell.skip();
        let ops = cell.ops();
        let mut z = 0.0;
        for (i, &g) in ops.iter().enumerate() {
            let degree = skip.degree(i) as f64 / (n - 1) as f64;
            let position = self.hasher(TAG_POSITION).u64(i as u64).u64(g.index() as u64).symmetric();
            z += self.op_score(g) * (1.0 + DEGREE_WEIGHT * degree) + POSITION_WEIGHT * position;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if skip.has_edge(i, j) {
                    z += PAIR_WEIGHT * self.pair_score(ops[i], ops[j]);
                }
            }
        }
        let slots = crate::search_space::num_edge_slots(n) as f64;
        let target = (0.3 + 0.5 * self.hasher(TAG_EDGE_TARGET).unit()) * slots;
        z -= EDGE_PENALTY * (skip.edge_count() as f64 - target).powi(2);
        z / n as f64
    }

    /// Noise-free accuracy at the top of the learning curve.
    pub fn asymptotic_accuracy(&self, cell: &CellGraph) -> f64 {
        let z = (self.structure_score(cell) - self.z_center) / self.z_scale;
        ACC_MID + ACC_SLOPE * z
    }

    fn tau(&self, key: &str) -> f64 {
        TAU_BASE * (1.0 + 0.1 * self.hasher(TAG_TAU).bytes(key.as_bytes()).symmetric())
    }

    fn check_cell(&self, cell: &CellGraph) -> Result<(), BenchError> {
        if cell.n_nodes() != self.spec.n_nodes {
            return Err(BenchError::WrongNodeCount { expected: self.spec.n_nodes, got: cell.n_nodes() });
        }
        match cell.ops().iter().find(|&&g| self.domain.position(g).is_none()) {
            Some(&g) => Err(BenchError::OpOutsideDomain(g)),
            None => Ok(()),
        }
    }

    /// Validation accuracy of `cell` after `budget` epochs.
    pub fn synth_accuracy(&self, cell: &CellGraph, budget: u32) -> Result<f64, BenchError> {
        if self.spec.ladder.level_of(budget).is_none() {
            return Err(BenchError::BudgetNotInLadder(budget));
        }
        self.check_cell(cell)?;
        let key = cell.encode();
        let curve = 1.0 - (-(budget as f64) / self.tau(&key)).exp();
        let noise = self.hasher(TAG_NOISE).bytes(key.as_bytes()).u64(budget as u64).gaussian();
        let acc = self.asymptotic_accuracy(cell) * curve + self.spec.noise_sd * noise;
        Ok(acc.clamp(0.0, 1.0))
    }

    pub fn test_accuracy(&self, cell: &CellGraph) -> Result<f64, BenchError> {
        self.check_cell(cell)?;
        let key = cell.encode();
        let top = self.spec.ladder.max_budget as f64;
        let curve = 1.0 - (-top / self.tau(&key)).exp();
        let noise = self.hasher(TAG_TEST).bytes(key.as_bytes()).gaussian();
        let acc = self.asymptotic_accuracy(cell) * curve - 0.004 + self.spec.noise_sd * noise;
        Ok(acc.clamp(0.0, 1.0))
    }

    pub fn record(&self, cell: &CellGraph) -> Result<BenchRecord, BenchError> {
        let accuracies = self
            .spec
            .ladder
            .budgets()
            .into_iter()
            .map(|b| Ok((b, self.synth_accuracy(cell, b)?)))
            .collect::<Result<_, BenchError>>()?;
        Ok(BenchRecord { cell: cell.clone(), accuracies, test_accuracy: self.test_accuracy(cell)? })
    }

    /// Every cell of the space with its full accuracy table.
    pub fn enumerate_space(&self) -> Result<Vec<BenchRecord>, BenchError> {
        enumerate_cells(self.spec.n_nodes, &self.domain)?
            .iter()
            .map(|c| self.record(c))
            .collect()
    }
}

impl Oracle for SyntheticOracle {
    fn n_nodes(&self) -> usize {
        self.spec.n_nodes
    }

    fn domain(&self) -> &OpDomain {
        &self.domain
    }

    fn ladder(&self) -> &BudgetLadder {
        &self.spec.ladder
    }

    fn evaluate(&self, cell: &CellGraph, budget: u32) -> Result<Evaluation, BenchError> {
        Ok(Evaluation { validation: self.synth_accuracy(cell, budget)?, test: self.test_accuracy(cell)? })
    }

    fn optimum(&self) -> Option<&Optimum> {
        self.optimum
            .get_or_init(|| {
                let top = self.spec.ladder.max_budget;
                let cells = enumerate_cells(self.spec.n_nodes, &self.domain).ok()?;
                let scored = cells.into_iter().map(|c| {
                    let v = self.synth_accuracy(&c, top).expect("enumerated cells are valid");
                    (c, v)
                });
                let (cell, validation) = best_of(scored)?;
                let test = self.test_accuracy(&cell).ok()?;
                Some(Optimum { cell, validation, test })
            })
            .as_ref()
    }
}

/// Highest accuracy; ties go to the smaller canonical encoding.
fn best_of(scored: impl Iterator<Item = (CellGraph, f64)>) -> Option<(CellGraph, f64)> {
    let mut best: Option<(CellGraph, f64, String)> = None;
    for (cell, v) in scored {
        let key = cell.encode();
        let better = match &best {
            None => true,
            Some((_, bv, bk)) => v > *bv || (v == *bv && key < *bk),
        };
        if better {
            best = Some((cell, v, key));
        }
    }
    best.map(|(c, v, _)| (c, v))
}

/// All valid cells over `domain`, skip patterns outermost.
pub fn enumerate_cells(n_nodes: usize, domain: &OpDomain) -> Result<Vec<CellGraph>, BenchError> {
    if n_nodes > MAX_EXHAUSTIVE_NODES {
        return Err(BenchError::SpaceTooLarge(
            (1u128 << crate::search_space::num_edge_slots(n_nodes)) * (domain.len() as u128).pow(n_nodes as u32),
        ));
    }
    let skips = SkipPattern::enumerate(n_nodes)?;
    let k = domain.len();
    let total = skips.len() as u128 * (k as u128).pow(n_nodes as u32);
    if total > MAX_EXHAUSTIVE_CELLS {
        return Err(BenchError::SpaceTooLarge(total));
    }
    let assignments = k.pow(n_nodes as u32);
    let mut cells = Vec::with_capacity(total as usize);
    for skip in &skips {
        for mut code in 0..assignments {
            let mut ops = vec![domain.ops()[0]; n_nodes];
            for slot in ops.iter_mut().rev() {
                *slot = domain.ops()[code % k];
                code /= k;
            }
            cells.push(CellGraph::new(skip.clone(), ops)?);
        }
    }
    Ok(cells)
}

/// Writes records in the documented line format.
pub fn write_records<W: Write>(records: &[BenchRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_line())?;
    }
    out.flush()
}

pub fn save_records(records: &[BenchRecord], path: impl AsRef<Path>) -> Result<(), BenchError> {
    let file = std::fs::File::create(path)?;
    write_records(records, std::io::BufWriter::new(file))?;
    Ok(())
}

/// Oracle backed by a record file.
#[derive(Debug)]
pub struct RecordOracle {
    records: HashMap<String, BenchRecord>,
    n_nodes: usize,
    domain: OpDomain,
    ladder: BudgetLadder,
    optimum: Option<Optimum>,
}

impl RecordOracle {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, BenchError> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            records.push(BenchRecord::parse_line(&line, i + 1)?);
        }
        Self::from_records(records)
    }

    pub fn from_records(records: Vec<BenchRecord>) -> Result<Self, BenchError> {
        let first = records.first().ok_or_else(|| BenchError::InvalidSpec("record set is empty".into()))?;
        let n_nodes = first.cell.n_nodes();
        let budgets: Vec<u32> = first.accuracies.keys().copied().collect();
        let ladder = infer_ladder(&budgets)?;
        let mut ops = BTreeSet::new();
        let mut map = HashMap::with_capacity(records.len());
        for (i, r) in records.into_iter().enumerate() {
            if r.cell.n_nodes() != n_nodes {
                return Err(BenchError::Parse { line: i + 1, reason: "node count differs from first record".into() });
            }
            if !r.accuracies.keys().copied().eq(budgets.iter().copied()) {
                return Err(BenchError::Parse { line: i + 1, reason: "budget set differs from first record".into() });
            }
            ops.extend(r.cell.ops().iter().copied());
            map.insert(r.cell.encode(), r);
        }
        let top = ladder.max_budget;
        let optimum = best_of(map.values().map(|r| (r.cell.clone(), r.accuracies[&top]))).map(|(cell, validation)| {
            let test = map[&cell.encode()].test_accuracy;
            Optimum { cell, validation, test }
        });
        Ok(Self { records: map, n_nodes, domain: OpDomain::new(ops.into_iter().collect())?, ladder, optimum })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, cell: &CellGraph) -> Option<&BenchRecord> {
        self.records.get(&cell.encode())
    }
}

fn infer_ladder(budgets: &[u32]) -> Result<BudgetLadder, BenchError> {
    let bad = || BenchError::InvalidSpec(format!("budgets {budgets:?} do not form a geometric ladder"));
    let (&min, &max) = (budgets.first().ok_or_else(bad)?, budgets.last().ok_or_else(bad)?);
    let eta = if budgets.len() > 1 { budgets[1] / min } else { 2 };
    let ladder = BudgetLadder::new(min, max, eta.max(2)).map_err(|_| bad())?;
    if ladder.budgets() != budgets {
        return Err(bad());
    }
    Ok(ladder)
}

impl Oracle for RecordOracle {
    fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    fn domain(&self) -> &OpDomain {
        &self.domain
    }

    fn ladder(&self) -> &BudgetLadder {
        &self.ladder
    }

    fn evaluate(&self, cell: &CellGraph, budget: u32) -> Result<Evaluation, BenchError> {
        let record = self.get(cell).ok_or_else(|| BenchError::UnknownCell(cell.encode()))?;
        let validation = *record.accuracies.get(&budget).ok_or(BenchError::BudgetNotInLadder(budget))?;
        Ok(Evaluation { validation, test: record.test_accuracy })
    }

    fn optimum(&self) -> Option<&Optimum> {
        self.optimum.as_ref()
    }
}

/// Landscape with a known operator sensitivity per skip pattern.
///
/// Top-budget accuracy is `base - sensitivity * penalty(ops)` where the
/// penalty is a hash-derived value in `[0, 1]` that is zero for exactly one
/// assignment (the seed-chosen best). Patterns not listed use the default
/// `(base, sensitivity)`.
#[derive(Debug)]
pub struct SensitivityOracle {
    n_nodes: usize,
    seed: u64,
    domain: OpDomain,
    ladder: BudgetLadder,
    graphs: Vec<(SkipPattern, f64, f64)>,
    default: (f64, f64),
}

impl SensitivityOracle {
    pub fn new(
        n_nodes: usize,
        domain: OpDomain,
        ladder: BudgetLadder,
        seed: u64,
        graphs: Vec<(SkipPattern, f64, f64)>,
        default: (f64, f64),
    ) -> Result<Self, BenchError> {
        let in_range = |(b, s): (f64, f64)| (0.0..=1.0).contains(&b) && s >= 0.0 && b - s >= 0.0;
        if !in_range(default) || graphs.iter().any(|(_, b, s)| !in_range((*b, *s))) {
            return Err(BenchError::InvalidSpec("need 0 <= base - sensitivity and base <= 1".into()));
        }
        Ok(Self { n_nodes, seed, domain, ladder, graphs, default })
    }

    fn penalty(&self, ops: &[GeneralizedOp]) -> f64 {
        let best: Vec<usize> = (0..ops.len())
            .map(|i| (StableHasher::new(self.seed).u64(i as u64).finish() % self.domain.len() as u64) as usize)
            .collect();
        let pos: Vec<usize> = ops.iter().map(|&g| self.domain.position(g).unwrap_or(0)).collect();
        if pos == best {
            return 0.0;
        }
        let mismatches = pos.iter().zip(&best).filter(|(a, b)| a != b).count() as f64;
        let mut h = StableHasher::new(self.seed).u64(u64::MAX);
        for &p in &pos {
            h = h.u64(p as u64);
        }
        (0.5 * mismatches / ops.len() as f64 + 0.5 * h.unit()).min(1.0)
    }

    fn top_accuracy(&self, cell: &CellGraph) -> f64 {
        let (base, sens) = self
            .graphs
            .iter()
            .find(|(s, _, _)| s == cell.skip())
            .map(|&(_, b, s)| (b, s))
            .unwrap_or(self.default);
        base - sens * self.penalty(cell.ops())
    }
}

impl Oracle for SensitivityOracle {
    fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    fn domain(&self) -> &OpDomain {
        &self.domain
    }

    fn ladder(&self) -> &BudgetLadder {
        &self.ladder
    }

    fn evaluate(&self, cell: &CellGraph, budget: u32) -> Result<Evaluation, BenchError> {
        if self.ladder.level_of(budget).is_none() {
            return Err(BenchError::BudgetNotInLadder(budget));
        }
        let top = self.top_accuracy(cell);
        let curve = 1.0 - (-(budget as f64) / TAU_BASE).exp();
        Ok(Evaluation { validation: top * curve, test: top })
    }

    fn optimum(&self) -> Option<&Optimum> {
        None
    }
}
