#![allow(dead_code)]

use gpnas::benchmark::SensitivityOracle;
use gpnas::bohb::BudgetLadder;
use gpnas::engine::{run_stability_study, StabilityConfig};
use gpnas::predictor::{backward, loss, Architecture, BnMode, Example, GraphInput, PredictorParams};
use gpnas::search_space::{sample_skip_pattern, CellGraph, GeneralizedOp, OpDomain, SkipPattern, NUM_GENERALIZED_OPS};
use gpnas::seeding::{rng_from_seed, SearchRng};
use rand::Rng;

pub fn random_cell(n: usize, rng: &mut SearchRng) -> CellGraph {
    let skip = sample_skip_pattern(n, rng).unwrap();
    let ops = (0..n)
        .map(|_| GeneralizedOp::from_index(rng.random_range(0..NUM_GENERALIZED_OPS)).unwrap())
        .collect();
    CellGraph::new(skip, ops).unwrap()
}

pub fn small_arch() -> Architecture {
    Architecture { gcn_layers: 2, d_emb: 4, d_ep: 2, hidden: 5, mlp_hidden: [6, 4], levels: 4 }
}

pub fn random_batch(size: usize, n: usize, levels: usize, rng: &mut SearchRng) -> Vec<Example> {
    (0..size)
        .map(|_| {
            let cell = random_cell(n, rng);
            let level = rng.random_range(0..levels);
            Example::new(GraphInput::from_cell(&cell, level), rng.random_range(0.0..1.0)).unwrap()
        })
        .collect()
}

pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
}

/// Absolute floor of the relative-error denominator, well above the
/// round-off of central differences on an O(0.1) loss.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient against central differences with step `h`
/// on every trainable scalar.
pub fn gradient_check(params: &PredictorParams, batch: &[Example], mode: BnMode, h: f64) -> GradCheck {
    let (_, grads) = backward(params, batch, mode).unwrap();
    let grads = grads.trainable();
    let mut probe = params.clone();
    let mut out = GradCheck { max_rel_error: 0.0, worst: String::new(), checked: 0 };
    let names: Vec<(String, usize)> = probe.trainable_mut().into_iter().map(|(n, s)| (n, s.len())).collect();
    for (t, (name, len)) in names.iter().enumerate() {
        for i in 0..*len {
            let orig = probe.trainable_mut()[t].1[i];
            probe.trainable_mut()[t].1[i] = orig + h;
            let up = loss(&probe, batch, mode).unwrap();
            probe.trainable_mut()[t].1[i] = orig - h;
            let down = loss(&probe, batch, mode).unwrap();
            probe.trainable_mut()[t].1[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let g = grads[t].1[i];
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(GRAD_FLOOR);
            out.checked += 1;
            if rel > out.max_rel_error {
                out.max_rel_error = rel;
                out.worst = format!("{name}[{i}]: analytic {g:e}, numeric {fd:e}");
            }
        }
    }
    out
}

pub fn seeded_params(arch: Architecture, seed: u64) -> PredictorParams {
    let mut p = PredictorParams::init(arch, seed).unwrap();
    let mut rng = rng_from_seed(seed ^ 0xA5A5);
    for layer in p.mlp.iter_mut() {
        if let Some(bn) = layer.norm.as_mut() {
            bn.gamma.mapv_inplace(|_| rng.random_range(0.5..1.5));
            bn.beta.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            bn.running_mean.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            bn.running_var.mapv_inplace(|_| rng.random_range(0.5..2.0));
        }
        layer.bias.mapv_inplace(|_| rng.random_range(-0.2..0.2));
    }
    p
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

pub fn isomorphic(a: &SkipPattern, b: &SkipPattern) -> bool {
    a.n_nodes() == b.n_nodes() && permutations(a.n_nodes()).iter().any(|p| a.permuted(p) == *b)
}

/// Two non-isomorphic skip patterns and a pair of oracles that swap which of
/// them is operator-sensitive. Returns whether the stability study ranks the
/// (avg - top) gaps correctly on both oracles.
pub fn stability_ordering_holds(seed: u64) -> bool {
    let mut rng = rng_from_seed(seed);
    let first = sample_skip_pattern(4, &mut rng).unwrap();
    let second = loop {
        let p = sample_skip_pattern(4, &mut rng).unwrap();
        if !isomorphic(&p, &first) {
            break p;
        }
    };
    let graphs: Vec<SkipPattern> = vec![first, second];
    let domain = OpDomain::reduced(3).unwrap();
    let make = |hi: usize| {
        let sens = |i: usize| if i == hi { 0.4 } else { 0.05 };
        let listed = graphs.iter().enumerate().map(|(i, g)| (g.clone(), 0.9, sens(i))).collect();
        SensitivityOracle::new(4, domain.clone(), BudgetLadder::default(), seed, listed, (0.5, 0.0)).unwrap()
    };
    let config = StabilityConfig::default();
    (0..2).all(|hi| {
        let rows = run_stability_study(&graphs, &config, &make(hi), &mut rng_from_seed(seed)).unwrap();
        rows[hi].gap() > rows[1 - hi].gap()
    })
}

/// Independent nested-loop implementation of the forward pass.
#[allow(clippy::needless_range_loop)]
pub fn reference_forward(params: &PredictorParams, adjacency: &[Vec<bool>], ops: &[usize], level: usize) -> f64 {
    let n = ops.len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j || adjacency[i][j] { 1.0 } else { 0.0 };
        }
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let mut h: Vec<Vec<f64>> = ops.iter().map(|&o| params.op_embedding.row(o).to_vec()).collect();
    for w in &params.gcn {
        let (rows, cols) = w.dim();
        let mut next = vec![vec![0.0; cols]; n];
        for i in 0..n {
            for c in 0..cols {
                let mut acc = 0.0;
                for j in 0..n {
                    let norm = a[i][j] / (deg[i].sqrt() * deg[j].sqrt());
                    for r in 0..rows {
                        acc += norm * h[j][r] * w[[r, c]];
                    }
                }
                next[i][c] = if acc > 0.0 { acc } else { 0.0 };
            }
        }
        h = next;
    }
    let mut x: Vec<f64> = (0..h[0].len()).map(|c| h.iter().map(|row| row[c]).fold(f64::MIN, f64::max)).collect();
    x.extend(params.epoch_embedding.row(level).iter());
    for (l, layer) in params.mlp.iter().enumerate() {
        let (rows, cols) = layer.weight.dim();
        let mut y = vec![0.0; cols];
        for c in 0..cols {
            let mut acc = layer.bias[c];
            for r in 0..rows {
                acc += x[r] * layer.weight[[r, c]];
            }
            if let Some(bn) = &layer.norm {
                acc = (acc - bn.running_mean[c]) / (bn.running_var[c] + 1e-5).sqrt() * bn.gamma[c] + bn.beta[c];
            }
            y[c] = if l < 2 && acc < 0.0 { 0.0 } else { acc };
        }
        x = y;
    }
    1.0 / (1.0 + (-x[0]).exp())
}
