//! Statistical checks on the synthetic generators.

use std::f64::consts::PI;

use groupsync::gen::{
    gen_graph, gen_ground_truth, generate_instance, langevin_mean_trace, sample_langevin_angle, sample_langevin_so3,
    substream, GenerateConfig, GraphConfig, NoiseConfig,
};
use groupsync::groups::GroupSpec;
use groupsync::linalg::Mat;
use groupsync::model::delta_matrix;

#[test]
fn edge_count_is_binomial() {
    let g = gen_graph(&GraphConfig { n: 100, p: 0.5 }, &mut substream(1, 0)).unwrap();
    let pairs = 100.0 * 99.0 / 2.0;
    let sd = (pairs * 0.25f64).sqrt();
    assert!((g.edges().len() as f64 - 0.5 * pairs).abs() <= 4.0 * sd);
}

#[test]
fn trivial_cyclic_truth_is_identity() {
    let g = gen_ground_truth(&GroupSpec::cyclic(1).unwrap(), 7, &mut substream(2, 1));
    assert!(g.blocks().all(|b| b == Mat::identity(2)));
}

#[test]
fn ground_truth_is_feasible_and_seeded() {
    for spec in [
        GroupSpec::orthogonal(4).unwrap(),
        GroupSpec::special_orthogonal(3).unwrap(),
        GroupSpec::permutation(5).unwrap(),
        GroupSpec::cyclic(9).unwrap(),
    ] {
        let a = gen_ground_truth(&spec, 30, &mut substream(3, 1));
        let b = gen_ground_truth(&spec, 30, &mut substream(3, 1));
        assert_eq!(a, b);
        assert!(a.blocks().all(|blk| spec.contains(&blk)), "{spec}");
    }
}

#[test]
fn gaussian_noise_is_centered() {
    let sigma = 0.1;
    let inst = generate_instance(&GenerateConfig {
        spec: GroupSpec::orthogonal(3).unwrap(),
        graph: GraphConfig { n: 150, p: 1.0 },
        noise: NoiseConfig::AdditiveGaussian { sigma },
        seed: 4,
    })
    .unwrap();
    let delta = delta_matrix(&inst).unwrap();
    let entries: Vec<f64> = inst
        .observations()
        .keys()
        .flat_map(|&(i, j)| delta.block(i, j).unwrap().into_vec())
        .collect();
    assert!(entries.len() >= 100_000);
    let mean = entries.iter().sum::<f64>() / entries.len() as f64;
    assert!(mean.abs() <= 4.0 * sigma / (entries.len() as f64).sqrt());

    // ‖Δ‖_F² counts every edge block twice.
    let direct: f64 = entries.iter().map(|x| x * x).sum::<f64>() * 2.0;
    assert!((delta.frobenius_norm() - direct.sqrt()).abs() < 1e-9);
}

#[test]
fn delta_recovers_drawn_noise() {
    let inst = generate_instance(&GenerateConfig {
        spec: GroupSpec::special_orthogonal(3).unwrap(),
        graph: GraphConfig { n: 12, p: 0.6 },
        noise: NoiseConfig::AdditiveUniform { bound: 0.2 },
        seed: 5,
    })
    .unwrap();
    let truth = inst.ground_truth().unwrap();
    let delta = delta_matrix(&inst).unwrap();
    for (&(i, j), c) in inst.observations() {
        let theta = c.sub(&truth.block(i).matmul(&truth.block(j).transpose()));
        assert_eq!(delta.block(i, j).unwrap(), theta);
        assert!(theta.as_slice().iter().all(|x| x.abs() <= 0.2 + 1e-15));
    }
}

#[test]
fn langevin_mean_trace_tracks_quadrature() {
    let draws = 100_000;
    let mut means = Vec::new();
    for (k, gamma) in [0.0, 1.0, 5.0].into_iter().enumerate() {
        let mut rng = substream(6, k as u64);
        let traces: Vec<f64> = (0..draws).map(|_| sample_langevin_so3(gamma, &mut rng).mat().trace()).collect();
        let mean = traces.iter().sum::<f64>() / draws as f64;
        let var = traces.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let tol = 4.0 * (var / draws as f64).sqrt();
        assert!((mean - langevin_mean_trace(gamma)).abs() <= tol, "γ = {gamma}: {mean}");
        means.push(mean);
    }
    assert!(means[0].abs() <= 0.02);
    assert!(means[0] < means[1] && means[1] < means[2]);
}

/// CDF of the Langevin rotation angle, density ∝ e^{2γ cos φ}(1 − cos φ),
/// tabulated by the trapezoid rule.
fn angle_cdf(gamma: f64) -> impl Fn(f64) -> f64 {
    let steps = 200_000;
    let h = PI / steps as f64;
    let dens = |phi: f64| (2.0 * gamma * (phi.cos() - 1.0)).exp() * (1.0 - phi.cos());
    let mut cum = vec![0.0; steps + 1];
    for s in 1..=steps {
        let (a, b) = ((s - 1) as f64 * h, s as f64 * h);
        cum[s] = cum[s - 1] + 0.5 * h * (dens(a) + dens(b));
    }
    let total = cum[steps];
    move |phi: f64| {
        let x = (phi / h).clamp(0.0, steps as f64);
        let s = (x.floor() as usize).min(steps - 1);
        let t = x - s as f64;
        (cum[s] * (1.0 - t) + cum[s + 1] * t) / total
    }
}

#[test]
fn langevin_angle_passes_kolmogorov_smirnov() {
    for (k, gamma) in [0.0, 1.0, 5.0].into_iter().enumerate() {
        let cdf = angle_cdf(gamma);
        let mut rng = substream(7, k as u64);
        let n = 10_000;
        let mut xs: Vec<f64> = (0..n).map(|_| sample_langevin_angle(gamma, &mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0f64, f64::max);
        // Asymptotic Kolmogorov quantile for p = 0.001.
        assert!(d * (n as f64).sqrt() < 1.949, "γ = {gamma}: D = {d}");
    }
}

#[test]
fn cyclic_outliers_hit_the_expected_rate() {
    let q = 0.7;
    let m = 5;
    let inst = generate_instance(&GenerateConfig {
        spec: GroupSpec::cyclic(m).unwrap(),
        graph: GraphConfig { n: 120, p: 1.0 },
        noise: NoiseConfig::Outlier { q },
        seed: 8,
    })
    .unwrap();
    let truth = inst.ground_truth().unwrap();
    let clean = inst
        .observations()
        .iter()
        .filter(|(&(i, j), c)| c.sub(&truth.block(i).matmul(&truth.block(j).transpose())).frobenius_norm() < 1e-12)
        .count();
    let total = inst.observations().len() as f64;
    // Corruption by Q_0 leaves the observation clean.
    let p_clean = q + (1.0 - q) / m as f64;
    let sd = (total * p_clean * (1.0 - p_clean)).sqrt();
    assert!((clean as f64 - total * p_clean).abs() <= 4.0 * sd);
}

#[test]
fn projected_additive_observations_are_permutations() {
    let spec = GroupSpec::permutation(4).unwrap();
    for delta in [0.0, 0.5, 3.0] {
        let inst = generate_instance(&GenerateConfig {
            spec,
            graph: GraphConfig { n: 15, p: 0.5 },
            noise: NoiseConfig::ProjectedAdditive { delta },
            seed: 9,
        })
        .unwrap();
        let truth = inst.ground_truth().unwrap();
        for (&(i, j), c) in inst.observations() {
            assert!(spec.contains(c));
            if delta == 0.0 {
                assert_eq!(c, &truth.block(i).matmul(&truth.block(j).transpose()));
            }
        }
    }
}

#[test]
fn instance_files_are_reproducible() {
    let cfg = GenerateConfig {
        spec: GroupSpec::special_orthogonal(3).unwrap(),
        graph: GraphConfig { n: 25, p: 0.4 },
        noise: NoiseConfig::OutlierLangevin { q: 0.8, gamma: 5.0 },
        seed: 10,
    };
    let a = generate_instance(&cfg).unwrap().to_json().unwrap();
    let b = generate_instance(&cfg).unwrap().to_json().unwrap();
    assert_eq!(a, b);
    let back = groupsync::model::Instance::from_json(&a).unwrap();
    assert_eq!(back.to_json().unwrap(), a);
}
