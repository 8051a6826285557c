use gpnas::metrics::chi_square_uniform;
use gpnas::search_space::{CellGraph, OpDomain, SkipPattern};
use gpnas::seeding::rng_from_seed;
use gpnas::tpe::*;
use rand::Rng;

fn ops_space(n: usize, k: usize) -> Subspace {
    Subspace::Ops { n_nodes: n, domain: OpDomain::reduced(k).unwrap() }
}

fn cell(skip: &SkipPattern, space: &Subspace, point: &[usize]) -> CellGraph {
    CellGraph::new(skip.clone(), space.to_ops(point).unwrap()).unwrap()
}

/// `max(n_min, floor(q N))` with `q = num / den` in exact integer arithmetic.
fn reference_split(n_b: usize, num: usize, den: usize, n_min: usize) -> (usize, usize) {
    let good = n_min.max(n_b * num / den);
    (good, n_min.max(n_b.saturating_sub(good)))
}

#[test]
fn split_arithmetic_sweep() {
    for (q, num, den) in [(0.1, 1, 10), (0.15, 15, 100), (0.3, 3, 10)] {
        for n_min in [1, 5, 10] {
            for n_b in 1..=1000 {
                assert_eq!(split_counts(n_b, q, n_min), reference_split(n_b, num, den, n_min), "N_b={n_b} q={q} n_min={n_min}");
            }
        }
    }
    assert_eq!(split_counts(20, 0.15, 3), (3, 17));
    assert_eq!(split_counts(100, 0.15, 5), (15, 85));
    assert_eq!(split_counts(50, 0.15, 5), (7, 43));
}

#[test]
fn split_pool_ranks_by_accuracy_then_timestamp() {
    let space = ops_space(3, 3);
    let skip = SkipPattern::complete(3).unwrap();
    let mut rng = rng_from_seed(1);
    let mut pool = ObservationPool::new();
    for t in 0..50u64 {
        let point: Vec<usize> = (0..3).map(|_| rng.random_range(0..3)).collect();
        let acc = (rng.random_range(0..10) as f64) / 10.0;
        pool.push(Observation::new(cell(&skip, &space, &point), 12, acc, t).unwrap());
    }
    let split = split_pool(&pool, &SplitSpec::default(), 12).unwrap();
    assert_eq!((split.good.len(), split.bad.len()), (7, 43));
    let mut all: Vec<&Observation> = pool.at_budget(12).iter().collect();
    all.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy).then(a.timestamp.cmp(&b.timestamp)));
    let good_ts: Vec<u64> = split.good.iter().map(|o| o.timestamp).collect();
    let want: Vec<u64> = all[..7].iter().map(|o| o.timestamp).collect();
    assert_eq!(good_ts, want);
    let bad_ts: Vec<u64> = split.bad.iter().map(|o| o.timestamp).collect();
    assert!(bad_ts.iter().all(|t| !good_ts.contains(t)));
}

fn proposal_counts(pool: &ObservationPool, spec: &SplitSpec, seed: u64) -> Vec<u64> {
    let space = ops_space(2, 3);
    let mut rng = rng_from_seed(seed);
    let mut counts = vec![0u64; 9];
    for _ in 0..10_000 {
        let p = propose(pool, spec, &space, &mut rng).unwrap();
        counts[p.point[0] * 3 + p.point[1]] += 1;
    }
    counts
}

#[test]
fn empty_pool_proposals_are_uniform() {
    let counts = proposal_counts(&ObservationPool::new(), &SplitSpec::default(), 3);
    assert!(chi_square_uniform(&counts) > 0.01, "{counts:?}");
}

#[test]
fn full_rho_proposals_are_uniform() {
    let space = ops_space(2, 3);
    let skip = SkipPattern::complete(2).unwrap();
    let mut pool = ObservationPool::new();
    for t in 0..40u64 {
        let point = [0, (t % 2) as usize];
        pool.push(Observation::new(cell(&skip, &space, &point), 4, 0.9 - 0.01 * t as f64, t).unwrap());
    }
    let spec = SplitSpec { rho: 1.0, ..SplitSpec::default() };
    let counts = proposal_counts(&pool, &spec, 4);
    assert!(chi_square_uniform(&counts) > 0.01, "{counts:?}");
    let skewed = proposal_counts(&pool, &SplitSpec { rho: 0.0, ..SplitSpec::default() }, 4);
    assert!(chi_square_uniform(&skewed) < 1e-6, "the model should not be uniform: {skewed:?}");
}

#[test]
fn proposals_concentrate_near_a_dominant_configuration() {
    let space = ops_space(4, 3);
    let skip = SkipPattern::complete(4).unwrap();
    let star = [2, 0, 1, 2];
    let mut rng = rng_from_seed(9);
    let mut pool = ObservationPool::new();
    pool.push(Observation::new(cell(&skip, &space, &star), 108, 0.99, 0).unwrap());
    for t in 1..40u64 {
        let point: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
        if point == star {
            continue;
        }
        pool.push(Observation::new(cell(&skip, &space, &point), 108, 0.10, t).unwrap());
    }
    let spec = SplitSpec { rho: 0.0, ..SplitSpec::default() };
    let trials = 200;
    let near = (0..trials)
        .filter(|&s| {
            let p = propose(&pool, &spec, &space, &mut rng_from_seed(1000 + s)).unwrap();
            p.point.iter().zip(&star).filter(|(a, b)| a != b).count() <= 1
        })
        .count() as f64;
    // Uniformly, c* or one of its 8 single-edit neighbours has mass 9 / 81.
    let p0 = 9.0 / 81.0;
    let mean = trials as f64 * p0;
    let sd = (trials as f64 * p0 * (1.0 - p0)).sqrt();
    assert!(near > mean + 4.0 * sd, "{near} near-c* proposals vs uniform {mean:.1} +- {sd:.1}");
}

#[test]
fn single_point_kernel_sums_to_one() {
    for (k, h) in [(2usize, 0.3), (3, 0.5), (7, 0.9)] {
        let kde = CategoricalKde::with_bandwidths(vec![vec![1]], vec![k], vec![h]).unwrap();
        let total: f64 = (0..k).map(|x| kde.density(&[x])).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((kde.density(&[1]) - ((1.0 - h) + h / k as f64)).abs() < 1e-15);
        assert!((kde.density(&[0]) - h / k as f64).abs() < 1e-15);
    }
}

#[test]
fn density_ratio_matches_hand_quotient() {
    let good = CategoricalKde::with_bandwidths(vec![vec![0, 1], vec![1, 1]], vec![2, 3], vec![0.2, 0.6]).unwrap();
    let bad = CategoricalKde::with_bandwidths(vec![vec![1, 0], vec![1, 2]], vec![2, 3], vec![0.4, 0.3]).unwrap();
    let x = [0, 1];
    let k = |c: usize, v: usize, h: f64, card: f64| if c == v { 1.0 - h + h / card } else { h / card };
    let l = (k(0, 0, 0.2, 2.0) * k(1, 1, 0.6, 3.0) + k(1, 0, 0.2, 2.0) * k(1, 1, 0.6, 3.0)) / 2.0;
    let g = (k(1, 0, 0.4, 2.0) * k(0, 1, 0.3, 3.0) + k(1, 0, 0.4, 2.0) * k(2, 1, 0.3, 3.0)) / 2.0;
    assert!((expected_improvement_density(&x, &good, &bad) - l / g).abs() < 1e-12);
}

#[test]
fn joint_subspace_round_trips_cells() {
    let domain = OpDomain::reduced(3).unwrap();
    let space = Subspace::Joint { n_nodes: 4, domain: domain.clone() };
    let mut rng = rng_from_seed(2);
    for _ in 0..200 {
        let point = space.random(&mut rng).unwrap();
        assert!(space.is_valid(&point));
        let c = space.to_cell(&point).unwrap();
        assert_eq!(space.project(&c).unwrap(), point);
    }
}
