use std::collections::HashMap;

use gpnas::baselines::*;
use gpnas::benchmark::{enumerate_cells, Oracle, OracleSpec, SyntheticOracle};
use gpnas::engine::{StopRule, Tracker};
use gpnas::metrics::{chi_square_uniform, mean, median, std_error};
use gpnas::search_space::OpDomain;
use gpnas::seeding::rng_from_seed;
use gpnas::tpe::{ObservationPool, SplitSpec};

fn oracle(n_nodes: usize, noise_sd: f64) -> SyntheticOracle {
    SyntheticOracle::new(OracleSpec { n_nodes, noise_sd, ..OracleSpec::default() }).unwrap()
}

fn until_optimum(max_evals: usize) -> StopRule {
    StopRule { max_evals: Some(max_evals), until_optimum: true, ..StopRule::default() }
}

#[test]
fn random_search_hits_the_nine_cell_optimum_geometrically() {
    let o = oracle(2, 0.0);
    let hits: Vec<f64> = (0..10_000)
        .map(|s| {
            let out = random_search(&o, &until_optimum(10_000), &mut rng_from_seed(s)).unwrap();
            out.optimum_hit.unwrap() as f64
        })
        .collect();
    // Uniform sampling with replacement: geometric with p = 1/9.
    let (m, se) = (mean(&hits), std_error(&hits));
    assert!((m - 9.0).abs() < 4.0 * se, "mean {m} +- {se}");
    let expected_median = ((0.5f64).ln() / (8.0f64 / 9.0).ln()).ceil();
    assert_eq!(median(&hits), expected_median);
}

#[test]
fn regularized_evolution_beats_random_search() {
    let o = oracle(4, 0.01);
    let stop = until_optimum(30_000);
    let hits = |f: &dyn Fn(u64) -> Option<usize>| -> Vec<f64> {
        (0..200).map(|s| f(s).map_or(f64::INFINITY, |h| h as f64)).collect()
    };
    let rs = hits(&|s| random_search(&o, &stop, &mut rng_from_seed(s)).unwrap().optimum_hit);
    let re = hits(&|s| {
        regularized_evolution(EvolutionConfig::default(), &o, &stop, &mut rng_from_seed(s)).unwrap().optimum_hit
    });
    assert!(median(&re) < median(&rs), "RE {} vs RS {}", median(&re), median(&rs));
}

#[test]
fn aging_removes_the_oldest_member() {
    let o = oracle(4, 0.01);
    let mut rng = rng_from_seed(4);
    let mut tracker = Tracker::new(&o, StopRule { max_evals: Some(500), ..StopRule::default() }).unwrap();
    let config = EvolutionConfig { population_size: 20, tournament_size: 5 };
    let mut state = EvolutionState::seed(config, &mut tracker, &mut rng).unwrap();
    assert_eq!(state.population.len(), 20);
    while !tracker.done() {
        let oldest = state.population.front().cloned().unwrap();
        let before = tracker.evaluations();
        let removed = regularized_evolution_step(&mut state, &mut tracker, &mut rng).unwrap();
        assert_eq!(removed, oldest);
        assert_eq!(state.population.len(), 20);
        let (newest, acc) = state.population.back().cloned().unwrap();
        assert_eq!(acc, o.evaluate(&newest, 108).unwrap().validation);
        assert_eq!(tracker.evaluations(), before + 1);
    }
    assert!(EvolutionConfig { population_size: 5, tournament_size: 6 }.validate().is_err());
}

#[test]
fn mutations_change_exactly_one_component() {
    let domain = OpDomain::full();
    let mut rng = rng_from_seed(12);
    for _ in 0..500 {
        let parent = random_cell(5, &domain, &mut rng).unwrap();
        for kind in Mutation::ALL {
            let child = mutate_with(&parent, kind, &domain, &mut rng).unwrap();
            let edge_diff = parent.skip().edges().iter().zip(child.skip().edges()).filter(|(a, b)| a != b).count();
            let mut comp_diff = 0;
            for (a, b) in parent.ops().iter().zip(child.ops()) {
                comp_diff += (a.op != b.op) as usize + (a.act != b.act) as usize + (a.init != b.init) as usize;
            }
            assert_eq!(edge_diff + comp_diff, 1, "{kind:?}");
            match kind {
                Mutation::FlipEdge => {}
                Mutation::Operator => assert!(parent.ops().iter().zip(child.ops()).all(|(a, b)| a.act == b.act && a.init == b.init)),
                Mutation::Activation => assert!(parent.ops().iter().zip(child.ops()).all(|(a, b)| a.op == b.op && a.init == b.init)),
                Mutation::Init => assert!(parent.ops().iter().zip(child.ops()).all(|(a, b)| a.op == b.op && a.act == b.act)),
            }
        }
    }
}

#[test]
fn hyperband_charges_one_cycle_exactly() {
    let o = oracle(4, 0.01);
    let out = hyperband(&o, &StopRule { max_evals: Some(69), ..StopRule::default() }, &mut rng_from_seed(1)).unwrap();
    assert_eq!(out.log.len(), 69);
    let charged: u64 = out.log.iter().map(|e| e.budget as u64).sum();
    assert_eq!(charged, 1692);
    assert_eq!(out.total_epochs(), 1692);
    let mut per_budget: HashMap<u32, usize> = HashMap::new();
    for e in &out.log {
        *per_budget.entry(e.budget).or_default() += 1;
    }
    assert_eq!(per_budget[&4], 27);
    assert_eq!(per_budget[&12], 9 + 12);
    assert_eq!(per_budget[&36], 3 + 4 + 6);
    assert_eq!(per_budget[&108], 1 + 1 + 2 + 4);
}

#[test]
fn pure_tpe_without_model_matches_uniform_sampling() {
    let o = oracle(2, 0.0);
    let cells = enumerate_cells(2, o.domain()).unwrap();
    let spec = SplitSpec { rho: 1.0, ..SplitSpec::default() };
    let out = pure_tpe(&spec, &o, &StopRule { max_evals: Some(9000), ..StopRule::default() }, &mut rng_from_seed(6)).unwrap();
    let mut counts = vec![0u64; cells.len()];
    for e in &out.log {
        counts[cells.iter().position(|c| *c == e.cell).unwrap()] += 1;
    }
    assert!(chi_square_uniform(&counts) > 0.01, "{counts:?}");

    let mut rng = rng_from_seed(7);
    let mut rs_counts = vec![0u64; cells.len()];
    for _ in 0..9000 {
        let c = random_cell(2, o.domain(), &mut rng).unwrap();
        rs_counts[cells.iter().position(|x| *x == c).unwrap()] += 1;
    }
    assert!(chi_square_uniform(&rs_counts) > 0.01, "{rs_counts:?}");

    let mut pool = ObservationPool::new();
    let mut tracker = Tracker::new(&o, StopRule { max_evals: Some(3), ..StopRule::default() }).unwrap();
    for _ in 0..3 {
        pure_tpe_step(&mut pool, &SplitSpec::default(), &mut tracker, &mut rng).unwrap();
    }
    assert_eq!(pool.len(), 3);
    assert!(tracker.done());
}
