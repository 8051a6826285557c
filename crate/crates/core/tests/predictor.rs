mod common;

use common::*;
use gpnas::predictor::{
    backward, forward, gcn_layer, load_params, loss, normalized_adjacency, predict_batch, rank_candidates,
    read_params, save_params, train, write_params, Architecture, BnMode, Example, GraphInput, PredictorError,
    PredictorParams, TrainConfig,
};
use gpnas::search_space::{CellGraph, GeneralizedOp, SkipPattern};
use gpnas::seeding::rng_from_seed;
use ndarray::{array, Array2};
use rand::seq::SliceRandom;
use rand::Rng;

fn zeroed(arch: Architecture) -> PredictorParams {
    let mut p = PredictorParams::init(arch, 0).unwrap();
    for (_, s) in p.trainable_mut() {
        s.fill(0.0);
    }
    p
}

#[test]
fn gcn_layer_without_edges_is_relu_of_hw() {
    let h = array![[1.0, -2.0], [0.5, 3.0], [-1.0, 1.0]];
    let w = array![[1.0, 2.0], [-1.0, 0.5]];
    let out = gcn_layer(&h, &Array2::zeros((3, 3)), &w).unwrap();
    assert_eq!(out, h.dot(&w).mapv(|x: f64| x.max(0.0)));
}

#[test]
fn gcn_layer_on_two_clique_is_one_half() {
    let a = array![[0.0, 1.0], [1.0, 0.0]];
    let out = gcn_layer(&Array2::eye(2), &a, &Array2::eye(2)).unwrap();
    for v in out.iter() {
        assert!((v - 0.5).abs() < 1e-15);
    }
}

#[test]
fn gcn_layer_output_is_non_negative_and_checks_shapes() {
    let mut rng = rng_from_seed(3);
    let cell = random_cell(6, &mut rng);
    let a = Array2::from_shape_fn((6, 6), |(i, j)| if cell.skip().has_edge(i, j) { 1.0 } else { 0.0 });
    let h = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0));
    let w = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
    assert!(gcn_layer(&h, &a, &w).unwrap().iter().all(|&v| v >= 0.0));
    assert!(matches!(gcn_layer(&h, &a, &Array2::zeros((3, 3))), Err(PredictorError::Shape(_))));
    assert!(matches!(gcn_layer(&h, &Array2::zeros((5, 5)), &w), Err(PredictorError::Shape(_))));
}

#[test]
fn normalized_adjacency_rejects_bad_matrices() {
    assert!(normalized_adjacency(&array![[0.0, 1.0], [0.0, 0.0]]).is_err());
    assert!(normalized_adjacency(&array![[1.0, 0.0], [0.0, 0.0]]).is_err());
    assert!(normalized_adjacency(&Array2::zeros((2, 3))).is_err());
    let n = normalized_adjacency(&array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]).unwrap();
    assert!((n[[0, 1]] - 1.0 / 6f64.sqrt()).abs() < 1e-15);
    assert!((n[[1, 1]] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn forward_is_permutation_invariant() {
    let params = seeded_params(Architecture::default(), 11);
    let mut rng = rng_from_seed(12);
    for case in 0..100 {
        let n = 5 + case % 3;
        let cell = random_cell(n, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let level = case % 4;
        let a = forward(&params, &GraphInput::from_cell(&cell, level)).unwrap();
        let b = forward(&params, &GraphInput::from_cell(&cell.permuted(&perm), level)).unwrap();
        assert!((a - b).abs() < 1e-10, "case {case}: {a} vs {b}");
    }
}

#[test]
fn zero_weights_give_zero_logit() {
    let params = zeroed(Architecture::default());
    let mut rng = rng_from_seed(1);
    let cell = random_cell(5, &mut rng);
    let p = forward(&params, &GraphInput::from_cell(&cell, 2)).unwrap();
    assert_eq!(p, 0.5);
}

#[test]
fn forward_matches_reference_implementation() {
    for case in 0..20u64 {
        let params = seeded_params(Architecture::default(), 100 + case);
        let mut rng = rng_from_seed(200 + case);
        let cell = random_cell(5, &mut rng);
        let level = (case % 4) as usize;
        let ops: Vec<usize> = cell.ops().iter().map(|g| g.index()).collect();
        let expect = reference_forward(&params, &cell.skip().adjacency(), &ops, level);
        let got = forward(&params, &GraphInput::from_cell(&cell, level)).unwrap();
        assert!((got - expect).abs() < 1e-10, "case {case}: {got} vs {expect}");
    }
}

#[test]
fn loss_values() {
    let params = zeroed(Architecture::default());
    let mut rng = rng_from_seed(5);
    let input = GraphInput::from_cell(&random_cell(4, &mut rng), 0);
    let one = [Example::new(input, 0.9).unwrap()];
    assert!((loss(&params, &one, BnMode::Running).unwrap() - 0.16).abs() < 1e-15);
    assert!(matches!(loss(&params, &[], BnMode::Running), Err(PredictorError::EmptyBatch)));

    let params = seeded_params(Architecture::default(), 6);
    let batch = random_batch(9, 5, 4, &mut rng);
    let preds = predict_batch(&params, &batch.iter().map(|e| e.input.clone()).collect::<Vec<_>>()).unwrap();
    let mut hand = 0.0;
    for (p, e) in preds.iter().zip(&batch) {
        hand += (p - e.label) * (p - e.label);
    }
    hand /= batch.len() as f64;
    assert!((loss(&params, &batch, BnMode::Running).unwrap() - hand).abs() < 1e-12);

    let exact: Vec<Example> = batch.iter().zip(&preds).map(|(e, &p)| Example::new(e.input.clone(), p).unwrap()).collect();
    assert_eq!(loss(&params, &exact, BnMode::Running).unwrap(), 0.0);
}

#[test]
fn zero_loss_batch_has_zero_gradient() {
    let params = seeded_params(Architecture::default(), 7);
    let mut rng = rng_from_seed(8);
    let batch = random_batch(6, 5, 4, &mut rng);
    let preds = predict_batch(&params, &batch.iter().map(|e| e.input.clone()).collect::<Vec<_>>()).unwrap();
    let exact: Vec<Example> = batch.iter().zip(preds).map(|(e, p)| Example::new(e.input.clone(), p).unwrap()).collect();
    let (l, grads) = backward(&params, &exact, BnMode::Running).unwrap();
    assert_eq!(l, 0.0);
    assert!(grads.trainable().iter().all(|(_, g)| g.iter().all(|&v| v == 0.0)));
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..10 {
        let params = seeded_params(small_arch(), seed);
        let mut rng = rng_from_seed(1000 + seed);
        let batch = random_batch(4, 5, 4, &mut rng);
        for mode in [BnMode::Batch, BnMode::Running] {
            let check = gradient_check(&params, &batch, mode, 1e-5);
            assert!(check.max_rel_error < 1e-4, "seed {seed} {mode:?}: {}", check.worst);
        }
    }
}

#[test]
fn unselected_max_pool_lane_gets_no_gradient() {
    let arch = Architecture { gcn_layers: 1, d_emb: 3, d_ep: 1, hidden: 3, mlp_hidden: [2, 2], levels: 1 };
    let mut params = seeded_params(arch, 4);
    params.gcn[0] = Array2::eye(3);
    params.op_embedding.row_mut(10).assign(&array![1.0, 2.0, 3.0]);
    params.op_embedding.row_mut(20).assign(&array![0.5, 0.5, 0.5]);
    let input = GraphInput::from_adjacency(&[vec![false, false], vec![false, false]], vec![10, 20], 0).unwrap();
    let (_, grads) = backward(&params, &[Example::new(input, 0.1).unwrap()], BnMode::Running).unwrap();
    assert!(grads.op_embedding.row(10).iter().any(|&g| g != 0.0));
    assert!(grads.op_embedding.row(20).iter().all(|&g| g == 0.0));
}

fn edge_count_dataset(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| {
            let cell = random_cell(5, &mut rng);
            let y = 0.2 + 0.06 * cell.skip().edge_count() as f64;
            Example::new(GraphInput::from_cell(&cell, 0), y).unwrap()
        })
        .collect()
}

#[test]
fn learns_a_linear_function_of_edge_count() {
    let data = edge_count_dataset(200, 21);
    let mean = data.iter().map(|e| e.label).sum::<f64>() / data.len() as f64;
    let var = data.iter().map(|e| (e.label - mean).powi(2)).sum::<f64>() / data.len() as f64;
    let config = TrainConfig { epochs: 200, seed: 3, ..TrainConfig::default() };
    let mut params = PredictorParams::init(config.arch, 3).unwrap();
    params.set_output_prior(mean);
    let report = train(&mut params, &data, &config).unwrap();
    assert_eq!(report.epoch_losses.len(), 200);
    let mse = loss(&params, &data, BnMode::Running).unwrap();
    assert!(mse < 0.1 * var, "mse {mse} vs variance {var}");
}

#[test]
fn zero_learning_rate_leaves_trainables_unchanged() {
    let data = edge_count_dataset(20, 2);
    let config = TrainConfig { learning_rate: 0.0, epochs: 3, batch_size: 8, ..TrainConfig::default() };
    let before = PredictorParams::init(config.arch, 9).unwrap();
    let mut after = before.clone();
    train(&mut after, &data, &config).unwrap();
    assert_eq!(before.trainable(), after.trainable());
}

#[test]
fn duplicated_dataset_has_identical_full_batch_losses() {
    let data = edge_count_dataset(30, 4);
    let twice: Vec<Example> = data.iter().chain(&data).cloned().collect();
    let arch = small_arch();
    let mut a = PredictorParams::init(arch, 1).unwrap();
    let mut b = a.clone();
    let la = train(&mut a, &data, &TrainConfig { epochs: 5, batch_size: 30, arch, ..TrainConfig::default() }).unwrap();
    let lb = train(&mut b, &twice, &TrainConfig { epochs: 5, batch_size: 60, arch, ..TrainConfig::default() }).unwrap();
    for (x, y) in la.epoch_losses.iter().zip(&lb.epoch_losses) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

#[test]
fn training_is_deterministic() {
    let data = edge_count_dataset(40, 5);
    let config = TrainConfig { epochs: 4, batch_size: 16, arch: small_arch(), seed: 8, ..TrainConfig::default() };
    let run = || {
        let mut p = PredictorParams::init(config.arch, 8).unwrap();
        let r = train(&mut p, &data, &config).unwrap();
        (p, r.epoch_losses)
    };
    let (p1, l1) = run();
    let (p2, l2) = run();
    assert_eq!(l1, l2);
    assert_eq!(p1, p2);
}

#[test]
fn divergence_is_reported() {
    let data = edge_count_dataset(16, 6);
    let config = TrainConfig { learning_rate: 1e300, epochs: 5, batch_size: 4, arch: small_arch(), ..TrainConfig::default() };
    let mut p = PredictorParams::init(config.arch, 2).unwrap();
    assert!(matches!(train(&mut p, &data, &config), Err(PredictorError::Diverged { .. })));
    assert!(p.trainable().iter().all(|(_, v)| v.iter().all(|x| x.is_finite())));
}

#[test]
fn rejects_bad_configs_and_labels() {
    let data = edge_count_dataset(4, 1);
    let mut p = PredictorParams::init(Architecture::default(), 0).unwrap();
    for bad in [
        TrainConfig { epochs: 0, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { learning_rate: f64::NAN, ..TrainConfig::default() },
        TrainConfig { arch: small_arch(), ..TrainConfig::default() },
    ] {
        assert!(matches!(train(&mut p, &data, &bad), Err(PredictorError::Config(_))));
    }
    assert!(matches!(train(&mut p, &[], &TrainConfig::default()), Err(PredictorError::EmptyBatch)));
    let input = data[0].input.clone();
    assert!(matches!(Example::new(input.clone(), 1.2), Err(PredictorError::Label(_))));
    let deep = GraphInput::from_adjacency(&[vec![false, true], vec![true, false]], vec![0, 1], 9).unwrap();
    assert!(forward(&p, &deep).is_err());
}

#[test]
fn ranking_is_sorted_stable_and_permutation_invariant() {
    let params = seeded_params(Architecture::default(), 13);
    let mut rng = rng_from_seed(14);
    let one = random_cell(4, &mut rng);
    let ranked = rank_candidates(&params, std::slice::from_ref(&one), 3).unwrap();
    assert_eq!(ranked.len(), 1);
    assert_eq!(ranked[0].0, one);

    let cells: Vec<CellGraph> = (0..30).map(|_| random_cell(5, &mut rng)).collect();
    let ranked = rank_candidates(&params, &cells, 3).unwrap();
    assert!(ranked.windows(2).all(|w| w[0].1 >= w[1].1));

    let perm = [2, 0, 1, 3];
    let twins = vec![one.clone(), one.permuted(&perm), one.clone()];
    let ranked = rank_candidates(&params, &twins, 1).unwrap();
    assert!((ranked[0].1 - ranked[1].1).abs() < 1e-12 && (ranked[1].1 - ranked[2].1).abs() < 1e-12);

    let dup = vec![one.clone(), one.clone()];
    let tagged = rank_candidates(&params, &dup, 0).unwrap();
    assert_eq!(tagged[0].1, tagged[1].1);
}

#[test]
fn stable_order_under_exact_ties() {
    let params = zeroed(Architecture::default());
    let skip = SkipPattern::complete(3).unwrap();
    let cells: Vec<CellGraph> = (0..5)
        .map(|i| CellGraph::new(skip.clone(), vec![GeneralizedOp::from_index(i).unwrap(); 3]).unwrap())
        .collect();
    let ranked = rank_candidates(&params, &cells, 0).unwrap();
    let order: Vec<CellGraph> = ranked.into_iter().map(|(c, _)| c).collect();
    assert_eq!(order, cells);
}

#[test]
fn parameters_round_trip_exactly() {
    let params = seeded_params(Architecture::default(), 17);
    let mut buf = Vec::new();
    write_params(&params, &mut buf).unwrap();
    assert_eq!(read_params(&buf[..]).unwrap(), params);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.txt");
    save_params(&params, &path).unwrap();
    assert_eq!(load_params(&path).unwrap(), params);
}

#[test]
fn malformed_parameter_files_are_rejected() {
    let params = seeded_params(small_arch(), 1);
    let mut buf = Vec::new();
    write_params(&params, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();

    let bad_header = text.replacen("gpnas-predictor 1", "gpnas-predictor 9", 1);
    assert!(matches!(read_params(bad_header.as_bytes()), Err(PredictorError::Format { line: 1, .. })));

    let truncated = lines[..lines.len() - 1].join("\n");
    assert!(read_params(truncated.as_bytes()).is_err());

    let mut short = lines.clone();
    let cut = short[3].rsplit_once(' ').unwrap().0.to_string();
    short[3] = &cut;
    assert!(matches!(read_params(short.join("\n").as_bytes()), Err(PredictorError::Format { line: 4, .. })));

    let mut reshaped = lines.clone();
    let wrong = reshaped[2].replacen(" 156 4 ", " 4 156 ", 1);
    reshaped[2] = &wrong;
    assert!(matches!(read_params(reshaped.join("\n").as_bytes()), Err(PredictorError::Format { line: 3, .. })));
}
