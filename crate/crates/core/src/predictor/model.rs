use ndarray::{s, Array1, Array2, Axis};

use super::{Example, GraphInput, PredictorError, PredictorParams, BN_EPS};

/// Which statistics batch-norm layers normalize with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Statistics of the current batch (training).
    Batch,
    /// Stored running statistics (inference).
    Running,
}

/// Gradients share the parameter layout; running statistics stay zero.
pub type Gradients = PredictorParams;

impl PredictorParams {
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, s) in z.trainable_mut() {
            s.fill(0.0);
        }
        for layer in z.mlp.iter_mut() {
            if let Some(bn) = layer.norm.as_mut() {
                bn.running_mean.fill(0.0);
                bn.running_var.fill(0.0);
            }
        }
        z
    }
}

/// `D^-1/2 (A + I) D^-1/2` for a square symmetric 0/1 adjacency.
pub fn normalized_adjacency(adjacency: &Array2<f64>) -> Result<Array2<f64>, PredictorError> {
    let (n, m) = adjacency.dim();
    if n != m || n == 0 {
        return Err(PredictorError::Shape(format!("adjacency is {n}x{m}")));
    }
    for i in 0..n {
        for j in 0..n {
            let a = adjacency[[i, j]];
            if a != adjacency[[j, i]] || !(a == 0.0 || a == 1.0) || (i == j && a != 0.0) {
                return Err(PredictorError::Shape(format!("adjacency entry ({i}, {j}) = {a}")));
            }
        }
    }
    let tilde = adjacency + &Array2::<f64>::eye(n);
    let inv_sqrt: Array1<f64> = tilde.sum_axis(Axis(1)).mapv(|d| 1.0 / d.sqrt());
    Ok(Array2::from_shape_fn((n, n), |(i, j)| tilde[[i, j]] * inv_sqrt[i] * inv_sqrt[j]))
}

/// One graph convolution `ReLU(D^-1/2 (A + I) D^-1/2 H W)` on a raw adjacency.
pub fn gcn_layer(
    h_prev: &Array2<f64>,
    adjacency: &Array2<f64>,
    weight: &Array2<f64>,
) -> Result<Array2<f64>, PredictorError> {
    let norm = normalized_adjacency(adjacency)?;
    if h_prev.nrows() != norm.nrows() || h_prev.ncols() != weight.nrows() {
        return Err(PredictorError::Shape(format!(
            "H is {:?}, A is {:?}, W is {:?}",
            h_prev.dim(),
            adjacency.dim(),
            weight.dim()
        )));
    }
    Ok(norm.dot(h_prev).dot(weight).mapv(relu))
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// GCN activations for a batch, with every graph's nodes stacked row-wise.
struct GraphTrace {
    /// First row of each graph.
    offsets: Vec<usize>,
    /// `A_hat H_{k-1}` for each layer.
    propagated: Vec<Array2<f64>>,
    /// Pre-activation `A_hat H_{k-1} W_k`.
    pre: Vec<Array2<f64>>,
    /// One pooled row per graph.
    pooled: Array2<f64>,
    /// Stacked row index of each pooled entry.
    argmax: Array2<usize>,
}

/// Block-diagonal `A_hat H` (or `A_hat^T H` when `transpose`).
fn propagate(inputs: &[&GraphInput], offsets: &[usize], h: &Array2<f64>, transpose: bool) -> Array2<f64> {
    let mut out = Array2::zeros(h.dim());
    for (input, &o) in inputs.iter().zip(offsets) {
        let a = &input.norm_adj;
        let n = a.nrows();
        for i in 0..n {
            let mut row = out.row_mut(o + i);
            for j in 0..n {
                let w = if transpose { a[[j, i]] } else { a[[i, j]] };
                if w != 0.0 {
                    row.scaled_add(w, &h.row(o + j));
                }
            }
        }
    }
    out
}

fn graph_forward(params: &PredictorParams, inputs: &[&GraphInput]) -> GraphTrace {
    let mut offsets = Vec::with_capacity(inputs.len());
    let mut ops = Vec::new();
    for input in inputs {
        offsets.push(ops.len());
        ops.extend_from_slice(&input.ops);
    }
    let mut h = params.op_embedding.select(Axis(0), &ops);
    let mut propagated = Vec::with_capacity(params.gcn.len());
    let mut pre = Vec::with_capacity(params.gcn.len());
    for w in &params.gcn {
        let m = propagate(inputs, &offsets, &h, false);
        let z = m.dot(w);
        h = z.mapv(relu);
        propagated.push(m);
        pre.push(z);
    }
    let width = h.ncols();
    let mut pooled = Array2::zeros((inputs.len(), width));
    let mut argmax = Array2::zeros((inputs.len(), width));
    for (b, (input, &o)) in inputs.iter().zip(&offsets).enumerate() {
        for c in 0..width {
            let mut best = o;
            for r in (o + 1)..(o + input.ops.len()) {
                if h[[r, c]] > h[[best, c]] {
                    best = r;
                }
            }
            pooled[[b, c]] = h[[best, c]];
            argmax[[b, c]] = best;
        }
    }
    GraphTrace { offsets, propagated, pre, pooled, argmax }
}

struct LayerTrace {
    input: Array2<f64>,
    xhat: Option<Array2<f64>>,
    inv_std: Option<Array1<f64>>,
    /// Output before the ReLU (after batch-norm when present).
    out: Array2<f64>,
}

/// Batch statistics of each normalized layer, for running-average updates.
pub(crate) type BatchStats = Vec<(Array1<f64>, Array1<f64>)>;

struct Forward {
    graphs: GraphTrace,
    layers: Vec<LayerTrace>,
    preds: Array1<f64>,
    stats: BatchStats,
}

fn check_inputs<'a>(params: &PredictorParams, inputs: impl Iterator<Item = &'a GraphInput>) -> Result<(), PredictorError> {
    for input in inputs {
        if input.level >= params.arch.levels {
            return Err(PredictorError::Shape(format!(
                "budget level {} but the epoch embedding has {} rows",
                input.level, params.arch.levels
            )));
        }
        if input.ops.is_empty() {
            return Err(PredictorError::Shape("graph has no nodes".into()));
        }
    }
    Ok(())
}

fn forward_pass(params: &PredictorParams, inputs: &[&GraphInput], mode: BnMode) -> Forward {
    let graphs = graph_forward(params, inputs);
    let hidden = params.arch.hidden;
    let d_ep = params.arch.d_ep;
    let mut v = Array2::zeros((inputs.len(), hidden + d_ep));
    v.slice_mut(s![.., ..hidden]).assign(&graphs.pooled);
    for (b, input) in inputs.iter().enumerate() {
        v.slice_mut(s![b, hidden..]).assign(&params.epoch_embedding.row(input.level));
    }
    let mut layers = Vec::with_capacity(params.mlp.len());
    let mut stats = Vec::new();
    let mut x = v;
    let last = params.mlp.len() - 1;
    for (l, layer) in params.mlp.iter().enumerate() {
        let xw = x.dot(&layer.weight);
        let (out, xhat, inv_std) = match &layer.norm {
            None => (xw + &layer.bias, None, None),
            Some(bn) => {
                let (centered, var) = match mode {
                    BnMode::Batch => {
                        let mean = xw.mean_axis(Axis(0)).expect("non-empty batch");
                        let centered = &xw - &mean;
                        let var = centered.mapv(|d| d * d).mean_axis(Axis(0)).expect("non-empty batch");
                        stats.push((mean + &layer.bias, var.clone()));
                        (centered, var)
                    }
                    BnMode::Running => (xw + &layer.bias - &bn.running_mean, bn.running_var.clone()),
                };
                let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                let xhat = centered * &inv_std;
                let y = &xhat * &bn.gamma + &bn.beta;
                (y, Some(xhat), Some(inv_std))
            }
        };
        let next = if l < last { out.mapv(relu) } else { out.clone() };
        layers.push(LayerTrace { input: x, xhat, inv_std, out });
        x = next;
    }
    let preds = x.column(0).mapv(sigmoid);
    Forward { graphs, layers, preds, stats }
}

/// Prediction for one graph using running batch-norm statistics.
pub fn forward(params: &PredictorParams, input: &GraphInput) -> Result<f64, PredictorError> {
    Ok(predict_batch(params, std::slice::from_ref(input))?[0])
}

/// Predictions using running batch-norm statistics.
pub fn predict_batch(params: &PredictorParams, inputs: &[GraphInput]) -> Result<Vec<f64>, PredictorError> {
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    check_inputs(params, inputs.iter())?;
    let refs: Vec<&GraphInput> = inputs.iter().collect();
    Ok(forward_pass(params, &refs, BnMode::Running).preds.to_vec())
}

fn mse(preds: &Array1<f64>, batch: &[&Example]) -> f64 {
    preds.iter().zip(batch).map(|(p, e)| (p - e.label).powi(2)).sum::<f64>() / batch.len() as f64
}

/// Mean squared error of `batch`.
pub fn loss(params: &PredictorParams, batch: &[Example], mode: BnMode) -> Result<f64, PredictorError> {
    let refs: Vec<&Example> = batch.iter().collect();
    if refs.is_empty() {
        return Err(PredictorError::EmptyBatch);
    }
    check_inputs(params, refs.iter().map(|e| &e.input))?;
    let inputs: Vec<&GraphInput> = refs.iter().map(|e| &e.input).collect();
    Ok(mse(&forward_pass(params, &inputs, mode).preds, &refs))
}

/// Loss and its gradient with respect to every trainable tensor.
pub fn backward(params: &PredictorParams, batch: &[Example], mode: BnMode) -> Result<(f64, Gradients), PredictorError> {
    let refs: Vec<&Example> = batch.iter().collect();
    let (l, g, _) = loss_and_grad(params, &refs, mode)?;
    Ok((l, g))
}

pub(crate) fn loss_and_grad(
    params: &PredictorParams,
    batch: &[&Example],
    mode: BnMode,
) -> Result<(f64, Gradients, BatchStats), PredictorError> {
    if batch.is_empty() {
        return Err(PredictorError::EmptyBatch);
    }
    check_inputs(params, batch.iter().map(|e| &e.input))?;
    let inputs: Vec<&GraphInput> = batch.iter().map(|e| &e.input).collect();
    let fw = forward_pass(params, &inputs, mode);
    let n = batch.len() as f64;
    let loss = mse(&fw.preds, batch);
    let mut grads = params.zeros_like();

    let d_logit: Array1<f64> = fw
        .preds
        .iter()
        .zip(batch)
        .map(|(&p, e)| 2.0 * (p - e.label) / n * p * (1.0 - p))
        .collect();
    let mut d_out = d_logit.insert_axis(Axis(1));
    let last = params.mlp.len() - 1;
    for l in (0..params.mlp.len()).rev() {
        let layer = &params.mlp[l];
        let trace = &fw.layers[l];
        if l < last {
            d_out.zip_mut_with(&trace.out, |d, &y| {
                if y <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        let d_u = match (&layer.norm, &trace.xhat, &trace.inv_std) {
            (Some(bn), Some(xhat), Some(inv_std)) => {
                let g = grads.mlp[l].norm.as_mut().expect("same layout");
                g.gamma += &(&d_out * xhat).sum_axis(Axis(0));
                g.beta += &d_out.sum_axis(Axis(0));
                let d_xhat = &d_out * &bn.gamma;
                match mode {
                    BnMode::Running => d_xhat * inv_std,
                    BnMode::Batch => {
                        let sum_d = d_xhat.sum_axis(Axis(0));
                        let sum_dx = (&d_xhat * xhat).sum_axis(Axis(0));
                        let centered = &d_xhat * n - &sum_d - &(xhat * &sum_dx);
                        centered * &(inv_std / n)
                    }
                }
            }
            _ => d_out,
        };
        grads.mlp[l].weight += &trace.input.t().dot(&d_u);
        grads.mlp[l].bias += &d_u.sum_axis(Axis(0));
        d_out = d_u.dot(&layer.weight.t());
    }

    let hidden = params.arch.hidden;
    let trace = &fw.graphs;
    let mut d_h = Array2::zeros(trace.pre.last().expect("at least one layer").dim());
    for (b, input) in inputs.iter().enumerate() {
        let mut ep = grads.epoch_embedding.row_mut(input.level);
        ep += &d_out.slice(s![b, hidden..]);
        for c in 0..hidden {
            d_h[[trace.argmax[[b, c]], c]] = d_out[[b, c]];
        }
    }
    for k in (0..params.gcn.len()).rev() {
        d_h.zip_mut_with(&trace.pre[k], |d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        grads.gcn[k] += &trace.propagated[k].t().dot(&d_h);
        let d_m = d_h.dot(&params.gcn[k].t());
        d_h = propagate(&inputs, &trace.offsets, &d_m, true);
    }
    for (input, &o) in inputs.iter().zip(&trace.offsets) {
        for (row, &op) in input.ops.iter().enumerate() {
            let mut e = grads.op_embedding.row_mut(op);
            e += &d_h.row(o + row);
        }
    }
    Ok((loss, grads, fw.stats))
}
