use std::collections::HashSet;

use gpnas::benchmark::*;
use gpnas::search_space::{CellGraph, SkipPattern};

fn synth(n_nodes: usize, seed: u64, noise_sd: f64) -> SyntheticOracle {
    SyntheticOracle::new(OracleSpec { n_nodes, seed, noise_sd, ..OracleSpec::default() }).unwrap()
}

#[test]
fn two_node_space_has_nine_records() {
    let oracle = synth(2, 0, 0.0);
    let records = oracle.enumerate_space().unwrap();
    assert_eq!(records.len(), 9);
    let cells: HashSet<String> = records.iter().map(|r| r.cell.encode()).collect();
    assert_eq!(cells.len(), 9);
    for r in &records {
        let budgets: Vec<u32> = r.accuracies.keys().copied().collect();
        assert_eq!(budgets, vec![4, 12, 36, 108]);
    }
}

#[test]
fn four_node_reduced_space_size() {
    let spec = OracleSpec::default();
    assert_eq!(SkipPattern::enumerate(4).unwrap().len(), 41);
    assert_eq!(spec.cardinality().unwrap(), 41 * 81);
    assert_eq!(enumerate_cells(4, &spec.domain().unwrap()).unwrap().len(), 3321);
}

#[test]
fn optimum_is_the_unique_brute_force_argmax() {
    for seed in 0..4 {
        let oracle = synth(4, seed, 0.01);
        let mut scores: Vec<(f64, CellGraph)> = oracle
            .enumerate_space()
            .unwrap()
            .into_iter()
            .map(|r| (r.accuracies[&108], r.cell))
            .collect();
        scores.sort_by(|a, b| b.0.total_cmp(&a.0));
        let opt = oracle.optimum().unwrap();
        assert_eq!(opt.cell, scores[0].1, "seed {seed}");
        assert_eq!(opt.validation, scores[0].0);
        assert!(scores[0].0 > scores[1].0, "seed {seed}: optimum is tied");
    }
}

#[test]
fn evaluations_are_deterministic_and_bounded() {
    let a = synth(4, 5, 0.02);
    let b = synth(4, 5, 0.02);
    for cell in enumerate_cells(4, a.domain()).unwrap().iter().step_by(37) {
        for budget in [4, 12, 36, 108] {
            let ea = a.evaluate(cell, budget).unwrap();
            assert_eq!(ea, b.evaluate(cell, budget).unwrap());
            assert!((0.0..=1.0).contains(&ea.validation) && (0.0..=1.0).contains(&ea.test));
        }
    }
    let cell = &enumerate_cells(4, a.domain()).unwrap()[0];
    assert!(matches!(a.evaluate(cell, 5), Err(BenchError::BudgetNotInLadder(5))));
}

#[test]
fn noiseless_curves_rise_with_budget() {
    let oracle = synth(4, 1, 0.0);
    for cell in enumerate_cells(4, oracle.domain()).unwrap().iter().step_by(11) {
        let v: Vec<f64> = [4, 12, 36, 108].iter().map(|&b| oracle.evaluate(cell, b).unwrap().validation).collect();
        assert!(v.windows(2).all(|w| w[0] <= w[1]), "{v:?}");
    }
}

#[test]
fn saved_table_replays_the_synthetic_oracle() {
    let oracle = synth(3, 2, 0.01);
    let records = oracle.enumerate_space().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.tsv");
    save_records(&records, &path).unwrap();
    let table = RecordOracle::load(&path).unwrap();
    assert_eq!(table.len(), records.len());
    for r in &records {
        for budget in [4, 12, 36, 108] {
            assert_eq!(table.evaluate(&r.cell, budget).unwrap(), oracle.evaluate(&r.cell, budget).unwrap());
        }
    }
    assert_eq!(table.optimum(), oracle.optimum());
}

#[test]
fn record_lines_round_trip() {
    for r in synth(2, 3, 0.01).enumerate_space().unwrap() {
        assert_eq!(BenchRecord::parse_line(&r.to_line(), 1).unwrap(), r);
    }
    assert!(BenchRecord::parse_line("not a record", 7).is_err());
}
