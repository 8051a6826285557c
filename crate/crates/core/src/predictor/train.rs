use rand::seq::SliceRandom;

use super::model::loss_and_grad;
use super::{predict_batch, BnMode, Example, GraphInput, PredictorError, PredictorParams, TrainConfig, BN_MOMENTUM};
use crate::search_space::CellGraph;
use crate::seeding::rng_from_seed;

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch SGD with momentum, updating `params` in place.
///
/// Returns [`PredictorError::Diverged`] as soon as a batch loss or any
/// parameter becomes non-finite; `params` then holds the last finite state.
pub fn train(params: &mut PredictorParams, dataset: &[Example], config: &TrainConfig) -> Result<TrainReport, PredictorError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(PredictorError::EmptyBatch);
    }
    if params.arch != config.arch {
        return Err(PredictorError::Config("parameters were built for a different architecture"));
    }
    let mut rng = rng_from_seed(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut velocity = params.zeros_like();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (loss, grads, stats) = loss_and_grad(params, &batch, BnMode::Batch)?;
            if !loss.is_finite() {
                return Err(PredictorError::Diverged { epoch, loss });
            }
            total += loss * batch.len() as f64;
            let backup = params.clone();
            step(params, &mut velocity, &grads, config);
            for (bn, (mean, var)) in params.mlp.iter_mut().filter_map(|l| l.norm.as_mut()).zip(stats) {
                bn.running_mean = &bn.running_mean * BN_MOMENTUM + &(mean * (1.0 - BN_MOMENTUM));
                bn.running_var = &bn.running_var * BN_MOMENTUM + &(var * (1.0 - BN_MOMENTUM));
            }
            if params.trainable_mut().iter().any(|(_, s)| s.iter().any(|v| !v.is_finite())) {
                *params = backup;
                return Err(PredictorError::Diverged { epoch, loss: f64::NAN });
            }
        }
        epoch_losses.push(total / dataset.len() as f64);
    }
    Ok(TrainReport { epoch_losses })
}

fn step(params: &mut PredictorParams, velocity: &mut PredictorParams, grads: &PredictorParams, config: &TrainConfig) {
    let mut grads = grads.clone();
    let g = grads.trainable_mut();
    let v = velocity.trainable_mut();
    let p = params.trainable_mut();
    for (((_, p), (_, v)), (_, g)) in p.into_iter().zip(v).zip(g) {
        for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
            *v = config.momentum * *v + g;
            *p -= config.learning_rate * *v;
        }
    }
}

/// Scores `cells` at budget `level` and returns them best first; equal scores
/// keep their input order.
pub fn rank_candidates(
    params: &PredictorParams,
    cells: &[CellGraph],
    level: usize,
) -> Result<Vec<(CellGraph, f64)>, PredictorError> {
    let inputs: Vec<GraphInput> = cells.iter().map(|c| GraphInput::from_cell(c, level)).collect();
    let scores = predict_batch(params, &inputs)?;
    let mut ranked: Vec<(CellGraph, f64)> = cells.iter().cloned().zip(scores).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(ranked)
}
