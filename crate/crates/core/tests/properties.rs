//! Randomized invariants. Inputs are drawn from seeded generators so failing
//! cases shrink to a small seed and size.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use groupsync::analysis::{contraction_excess, estimation_error, recovery_rate, ContractionSample};
use groupsync::blocklin::{BlockColumn, BlockSymMatrix, Diagonal};
use groupsync::groups::{project, sample_uniform, GroupSpec};
use groupsync::linalg::Mat;
use groupsync::model::{assemble_c, connectivity_stats, degree_inverse_apply, MeasurementGraph, Observations};

fn group() -> impl Strategy<Value = GroupSpec> {
    prop_oneof![
        (1usize..=5).prop_map(|d| GroupSpec::orthogonal(d).unwrap()),
        (1usize..=5).prop_map(|d| GroupSpec::special_orthogonal(d).unwrap()),
        (1usize..=6).prop_map(|d| GroupSpec::permutation(d).unwrap()),
        (1usize..=24).prop_map(|m| GroupSpec::cyclic(m).unwrap()),
    ]
}

fn gaussian(d: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(d, d, |_, _| rng.sample(StandardNormal))
}

fn proj(spec: &GroupSpec, x: &Mat) -> Mat {
    project(spec, x).unwrap().element.into_mat()
}

fn column(spec: &GroupSpec, n: usize, rng: &mut ChaCha8Rng) -> BlockColumn {
    let blocks: Vec<Mat> = (0..n).map(|_| sample_uniform(spec, rng).into_mat()).collect();
    BlockColumn::from_blocks(spec.dim(), &blocks).unwrap()
}

fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> MeasurementGraph {
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|_| rng.gen::<f64>() < p)
        .collect();
    MeasurementGraph::new_unchecked_connectivity(n, edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_is_a_feasible_idempotent(spec in group(), seed: u64, scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(spec.dim(), &mut rng).scale(scale);
        let p = proj(&spec, &x);
        prop_assert!(spec.contains(&p));
        prop_assert!(proj(&spec, &p).sub(&p).frobenius_norm() < 1e-9);
    }

    #[test]
    fn projection_ignores_positive_scaling(spec in group(), seed: u64, eta in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(spec.dim(), &mut rng);
        prop_assert!(proj(&spec, &x.scale(eta)).sub(&proj(&spec, &x)).frobenius_norm() < 1e-9);
    }

    #[test]
    fn projection_commutes_with_left_multiplication(spec in group(), seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(spec.dim(), &mut rng);
        let g = sample_uniform(&spec, &mut rng).into_mat();
        let lhs = proj(&spec, &g.matmul(&x));
        let rhs = g.matmul(&proj(&spec, &x));
        prop_assert!(lhs.sub(&rhs).frobenius_norm() < 1e-9);
    }

    #[test]
    fn projection_is_nearest_element(spec in group(), seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(spec.dim(), &mut rng);
        let got = x.sub(&proj(&spec, &x)).frobenius_norm();
        match spec.enumerate().filter(|e| e.len() <= 720) {
            Some(all) => {
                let best = all.iter().map(|g| x.sub(g.mat()).frobenius_norm()).fold(f64::INFINITY, f64::min);
                prop_assert!(got <= best + 1e-12);
            }
            None => {
                for _ in 0..200 {
                    let q = sample_uniform(&spec, &mut rng).into_mat();
                    prop_assert!(got <= x.sub(&q).frobenius_norm() + 1e-9);
                }
            }
        }
    }

    #[test]
    fn contraction_holds(spec in group(), seed: u64, ri in 0usize..3, spread in -4.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = [0.1, 1.0, 10.0][ri];
        let q = sample_uniform(&spec, &mut rng).into_mat();
        let e = gaussian(spec.dim(), &mut rng).scale(10f64.powf(spread));
        let s = ContractionSample { r, x: q.add(&e).scale(r), q };
        prop_assert!(contraction_excess(&spec, &s) <= 1e-9);
    }

    #[test]
    fn error_is_gauge_invariant(spec in group(), seed: u64, n in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = column(&spec, n, &mut rng);
        let gstar = column(&spec, n, &mut rng);
        let q0 = sample_uniform(&spec, &mut rng).into_mat();
        let a = estimation_error(&spec, &g, &gstar).unwrap().epsilon;
        let b = estimation_error(&spec, &g.mul_right(&q0), &gstar).unwrap().epsilon;
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!(estimation_error(&spec, &gstar.mul_right(&q0), &gstar).unwrap().epsilon < 1e-9);
        let rate = recovery_rate(&spec, &g, &gstar).unwrap();
        prop_assert!((0.0..=1.0).contains(&rate));
    }

    #[test]
    fn full_recovery_iff_small_error_for_discrete_groups(
        spec in prop_oneof![
            (2usize..=5).prop_map(|d| GroupSpec::permutation(d).unwrap()),
            (2usize..=40).prop_map(|m| GroupSpec::cyclic(m).unwrap()),
        ],
        seed: u64,
        n in 1usize..12,
        corrupt in proptest::bool::ANY,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gstar = column(&spec, n, &mut rng);
        let mut g = gstar.mul_right(&sample_uniform(&spec, &mut rng).into_mat());
        if corrupt {
            let i = rng.gen_range(0..n);
            g.set_block(i, sample_uniform(&spec, &mut rng).mat());
        }
        let eps = estimation_error(&spec, &g, &gstar).unwrap().epsilon;
        let rate = recovery_rate(&spec, &g, &gstar).unwrap();
        prop_assert_eq!(rate == 1.0, eps <= 1e-6 * (n as f64).sqrt());
    }

    #[test]
    fn block_matrix_is_symmetric(seed: u64, n in 1usize..10, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut upper = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < 0.5 {
                    upper.push(((i, j), gaussian(d, &mut rng)));
                }
            }
        }
        let c = BlockSymMatrix::new(n, d, Diagonal::Identity, upper).unwrap();
        let x = Mat::from_fn(n * d, 1, |_, _| rng.sample(StandardNormal));
        let y = Mat::from_fn(n * d, 1, |_, _| rng.sample(StandardNormal));
        let lhs = x.dot(&c.apply(&y).unwrap());
        let rhs = c.apply(&x).unwrap().dot(&y);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn kappa_matches_the_definition(seed: u64, n in 2usize..14, p in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(n, p, &mut rng);
        let w = |i: usize, j: usize| if i == j || g.w(i, j) { 1.0 } else { 0.0 };
        let r: Vec<f64> = (0..n).map(|i| (0..n).map(|j| w(i, j)).sum()).collect();
        let mu = |j: usize, k: usize| (0..n).map(|i| w(i, j) * w(i, k) / (r[i] * r[i])).sum::<f64>();
        let inv_n = 1.0 / n as f64;
        let k1 = (0..n)
            .flat_map(|j| (j + 1..n).map(move |k| (j, k)))
            .map(|(j, k)| (mu(j, k) - inv_n).abs())
            .fold(0.0f64, f64::max) * n as f64;
        let k2 = (0..n).map(|j| mu(j, j) - inv_n).fold(f64::NEG_INFINITY, f64::max);
        let s = connectivity_stats(&g);
        prop_assert!((s.kappa1 - k1).abs() < 1e-12);
        prop_assert!((s.kappa2 - k2).abs() < 1e-12);
    }

    #[test]
    fn data_matrix_splits_into_signal_and_noise(seed: u64, n in 2usize..10, p in 0.2f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = GroupSpec::orthogonal(2).unwrap();
        let graph = random_graph(n, p, &mut rng);
        let truth = column(&spec, n, &mut rng);
        let obs: Observations = graph
            .edges()
            .iter()
            .map(|&(i, j)| ((i, j), truth.block(i).matmul(&truth.block(j).transpose()).add(&gaussian(2, &mut rng).scale(0.3))))
            .collect();
        let c = assemble_c(&graph, &obs, 2).unwrap().to_dense();
        let upper = obs.iter().map(|(&(i, j), cij)| ((i, j), cij.sub(&truth.block(i).matmul(&truth.block(j).transpose()))));
        let delta = BlockSymMatrix::new(n, 2, Diagonal::Zero, upper).unwrap().to_dense();
        let gram = truth.to_mat().matmul(&truth.to_mat().transpose());
        let masked = Mat::from_fn(2 * n, 2 * n, |a, b| {
            let (i, j) = (a / 2, b / 2);
            if i == j || graph.w(i, j) { gram[(a, b)] } else { 0.0 }
        });
        prop_assert!(c.sub(&delta.add(&masked)).frobenius_norm() < 1e-12);
    }

    #[test]
    fn degree_scaling_inverts(seed: u64, n in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(n, 0.5, &mut rng);
        let y = BlockColumn::from_mat(2, Mat::from_fn(2 * n, 2, |_, _| rng.sample(StandardNormal))).unwrap();
        let z = degree_inverse_apply(&g, &y).unwrap();
        for i in 0..n {
            let back = z.block(i).scale(g.degree(i) as f64);
            prop_assert!(back.sub(&y.block(i)).frobenius_norm() < 1e-12);
        }
    }
}
