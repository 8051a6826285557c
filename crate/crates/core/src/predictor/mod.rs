//! Graph-convolutional performance predictor.
//!
//! A cell is read as an undirected graph whose node features are learned
//! embeddings of the node operators. `L` GCN layers
//! `H' = ReLU(D^-1/2 (A + I) D^-1/2 H W)` are followed by an element-wise max
//! over nodes, concatenation with a learned embedding of the budget level, and
//! a three-layer MLP (batch-norm + ReLU on the hidden layers, sigmoid on the
//! scalar output). Training minimizes mean squared error against observed
//! validation accuracies with gradients computed by hand-written reverse mode.

mod io;
mod model;
mod train;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::search_space::{CellGraph, NUM_GENERALIZED_OPS};
use crate::seeding::rng_from_seed;

pub use io::{load_params, read_params, save_params, write_params, FORMAT_HEADER};
pub use model::{
    backward, forward, gcn_layer, loss, normalized_adjacency, predict_batch, BnMode, Gradients,
};
pub use train::{rank_candidates, train, TrainReport};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("label {0} is outside [0, 1]")]
    Label(f64),
    #[error("parameter file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Layer sizes of the predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub gcn_layers: usize,
    pub d_emb: usize,
    pub d_ep: usize,
    pub hidden: usize,
    pub mlp_hidden: [usize; 2],
    /// Number of budget levels the epoch embedding covers.
    pub levels: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { gcn_layers: 3, d_emb: 32, d_ep: 8, hidden: 64, mlp_hidden: [64, 32], levels: 4 }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<(), PredictorError> {
        let sizes = [self.gcn_layers, self.d_emb, self.d_ep, self.hidden, self.mlp_hidden[0], self.mlp_hidden[1], self.levels];
        if sizes.contains(&0) {
            return Err(PredictorError::Config("all layer sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub arch: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            momentum: 0.9,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            arch: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PredictorError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(PredictorError::Config("learning_rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(PredictorError::Config("momentum must be in [0, 1)"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(PredictorError::Config("epochs and batch_size must be positive"));
        }
        self.arch.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

/// Affine layer `x W + b`, optionally batch-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub norm: Option<BatchNorm>,
}

/// Every tensor of the predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorParams {
    pub arch: Architecture,
    /// `156 x d_emb`, indexed by generalized-operator index.
    pub op_embedding: Array2<f64>,
    /// `levels x d_ep`, indexed by budget level.
    pub epoch_embedding: Array2<f64>,
    pub gcn: Vec<Array2<f64>>,
    pub mlp: Vec<DenseLayer>,
}

impl PredictorParams {
    /// Seeded initialization: unit-normal embeddings, He-uniform weights,
    /// zero biases, identity batch-norm.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self, PredictorError> {
        arch.validate()?;
        let mut rng = rng_from_seed(seed);
        let normal = |rows: usize, cols: usize, rng: &mut crate::seeding::SearchRng| {
            Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
        };
        let uniform = |rows: usize, cols: usize, bound: f64, rng: &mut crate::seeding::SearchRng| {
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
        };
        let op_embedding = normal(NUM_GENERALIZED_OPS, arch.d_emb, &mut rng);
        let epoch_embedding = normal(arch.levels, arch.d_ep, &mut rng);
        let mut gcn = Vec::with_capacity(arch.gcn_layers);
        let mut width = arch.d_emb;
        for _ in 0..arch.gcn_layers {
            gcn.push(uniform(width, arch.hidden, (6.0 / width as f64).sqrt(), &mut rng));
            width = arch.hidden;
        }
        let widths = [arch.hidden + arch.d_ep, arch.mlp_hidden[0], arch.mlp_hidden[1], 1];
        let mlp = (0..3)
            .map(|l| {
                let (fan_in, fan_out) = (widths[l], widths[l + 1]);
                let last = l == 2;
                let bound = if last { (6.0 / (fan_in + fan_out) as f64).sqrt() } else { (6.0 / fan_in as f64).sqrt() };
                DenseLayer {
                    weight: uniform(fan_in, fan_out, bound, &mut rng),
                    bias: Array1::zeros(fan_out),
                    norm: (!last).then(|| BatchNorm::new(fan_out)),
                }
            })
            .collect();
        Ok(Self { arch, op_embedding, epoch_embedding, gcn, mlp })
    }

    /// Sets the output bias so an untrained model predicts `accuracy`.
    pub fn set_output_prior(&mut self, accuracy: f64) {
        let p = accuracy.clamp(1e-3, 1.0 - 1e-3);
        self.mlp[2].bias[0] = (p / (1.0 - p)).ln();
    }

    /// Trainable tensors in a fixed order, as flat slices.
    pub fn trainable_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        out.push(("op_embedding".into(), self.op_embedding.as_slice_mut().expect("standard layout")));
        out.push(("epoch_embedding".into(), self.epoch_embedding.as_slice_mut().expect("standard layout")));
        for (k, w) in self.gcn.iter_mut().enumerate() {
            out.push((format!("gcn.{k}"), w.as_slice_mut().expect("standard layout")));
        }
        for (l, layer) in self.mlp.iter_mut().enumerate() {
            out.push((format!("mlp.{l}.weight"), layer.weight.as_slice_mut().expect("standard layout")));
            out.push((format!("mlp.{l}.bias"), layer.bias.as_slice_mut().expect("standard layout")));
            if let Some(bn) = layer.norm.as_mut() {
                out.push((format!("mlp.{l}.gamma"), bn.gamma.as_slice_mut().expect("standard layout")));
                out.push((format!("mlp.{l}.beta"), bn.beta.as_slice_mut().expect("standard layout")));
            }
        }
        out
    }

    pub fn trainable(&self) -> Vec<(String, Vec<f64>)> {
        self.clone().trainable_mut().into_iter().map(|(n, s)| (n, s.to_vec())).collect()
    }
}

/// A cell prepared for the predictor: normalized adjacency, operator indices
/// and budget level.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub(crate) norm_adj: Array2<f64>,
    pub(crate) ops: Vec<usize>,
    pub(crate) level: usize,
}

impl GraphInput {
    pub fn from_cell(cell: &CellGraph, level: usize) -> Self {
        let ops = cell.ops().iter().map(|g| g.index()).collect();
        Self::from_adjacency(&cell.skip().adjacency(), ops, level).expect("cells are well-formed")
    }

    /// From a raw symmetric 0/1 adjacency without self-loops.
    pub fn from_adjacency(adjacency: &[Vec<bool>], ops: Vec<usize>, level: usize) -> Result<Self, PredictorError> {
        let n = adjacency.len();
        if ops.len() != n || adjacency.iter().any(|r| r.len() != n) {
            return Err(PredictorError::Shape(format!("{n}-node adjacency with {} operators", ops.len())));
        }
        if let Some(&g) = ops.iter().find(|&&g| g >= NUM_GENERALIZED_OPS) {
            return Err(PredictorError::Shape(format!("operator index {g}")));
        }
        let a = Array2::from_shape_fn((n, n), |(i, j)| if adjacency[i][j] { 1.0 } else { 0.0 });
        Ok(Self { norm_adj: normalized_adjacency(&a)?, ops, level })
    }

    pub fn n_nodes(&self) -> usize {
        self.ops.len()
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn normalized(&self) -> &Array2<f64> {
        &self.norm_adj
    }
}

/// A labeled training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: GraphInput,
    pub label: f64,
}

impl Example {
    pub fn new(input: GraphInput, label: f64) -> Result<Self, PredictorError> {
        if !(0.0..=1.0).contains(&label) {
            return Err(PredictorError::Label(label));
        }
        Ok(Self { input, label })
    }
}
