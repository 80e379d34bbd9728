//! Randomized property suites for the projections, the contraction
//! inequality, and the ρ-inequality, runnable outside the test harness.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::analysis::{condition_i, contraction_excess, contraction_samples, estimation_error};
use crate::blocklin::BlockColumn;
use crate::gen::substream;
use crate::groups::{project_unchecked, sample_uniform, GroupSpec};
use crate::linalg::Mat;

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    /// Largest amount by which the checked inequality was exceeded
    /// (nonpositive when it always held).
    pub worst_excess: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

struct Tally {
    samples: usize,
    violations: usize,
    worst: f64,
}

impl Tally {
    fn new() -> Self {
        Self {
            samples: 0,
            violations: 0,
            worst: f64::NEG_INFINITY,
        }
    }

    fn record(&mut self, excess: f64, tol: f64) {
        self.samples += 1;
        self.worst = self.worst.max(excess);
        if excess.is_nan() || excess > tol {
            self.violations += 1;
        }
    }

    fn finish(self, name: String) -> CheckOutcome {
        CheckOutcome {
            name,
            samples: self.samples,
            violations: self.violations,
            worst_excess: self.worst,
        }
    }
}

fn gaussian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Mat {
    Mat::from_fn(d, d, |_, _| rng.sample(StandardNormal))
}

/// For a finite group: `⟨X, Π(X)⟩` equals the maximum over all elements.
pub fn projection_vs_enumeration(spec: &GroupSpec, samples: usize, seed: u64) -> CheckOutcome {
    let elements = spec.enumerate().expect("finite group");
    let mut rng = substream(seed, 0);
    let mut tally = Tally::new();
    for _ in 0..samples {
        let x = gaussian(spec.dim(), &mut rng);
        let best = elements.iter().map(|g| x.dot(g.mat())).fold(f64::NEG_INFINITY, f64::max);
        let got = x.dot(project_unchecked(spec, &x).element.mat());
        tally.record(best - got, 1e-12);
    }
    tally.finish(format!("projection optimal over all elements of {spec}"))
}

/// For a continuous group: `⟨X, Π(X)⟩ ≥ ⟨X, Q⟩` for Haar-sampled `Q`.
pub fn projection_vs_haar(spec: &GroupSpec, samples: usize, per_sample: usize, seed: u64) -> CheckOutcome {
    let mut rng = substream(seed, 0);
    let mut tally = Tally::new();
    for _ in 0..samples {
        let x = gaussian(spec.dim(), &mut rng);
        let got = x.dot(project_unchecked(spec, &x).element.mat());
        let best = (0..per_sample)
            .map(|_| x.dot(sample_uniform(spec, &mut rng).mat()))
            .fold(f64::NEG_INFINITY, f64::max);
        tally.record(best - got, 1e-9);
    }
    tally.finish(format!("projection beats Haar samples in {spec}"))
}

/// `‖Π(X) − Q‖_F ≤ 2‖X/r − Q‖_F`.
pub fn contraction(spec: &GroupSpec, samples: usize, seed: u64) -> CheckOutcome {
    let mut tally = Tally::new();
    for s in contraction_samples(spec, samples, &mut substream(seed, 0)) {
        tally.record(contraction_excess(spec, &s), 1e-9);
    }
    tally.finish(format!("contraction inequality in {spec}"))
}

/// `‖G*ᵀG − nΠ(G*ᵀG)‖_F ≤ ρ·Tr(nI − Π(G*ᵀG)ᵀG*ᵀG)` for random pairs in Gⁿ.
///
/// Half of the pairs take `G` as a perturbation of `G*` (a random subset of
/// blocks resampled) so that nearly aligned configurations are covered too.
pub fn rho_inequality(spec: &GroupSpec, n: usize, samples: usize, seed: u64) -> CheckOutcome {
    let mut rng = substream(seed, 0);
    let mut tally = Tally::new();
    let d = spec.dim();
    let column = |rng: &mut rand_chacha::ChaCha8Rng| {
        let blocks: Vec<Mat> = (0..n).map(|_| sample_uniform(spec, rng).into_mat()).collect();
        BlockColumn::from_blocks(d, &blocks).expect("square blocks")
    };
    for k in 0..samples {
        let gstar = column(&mut rng);
        let g = if k % 2 == 0 {
            column(&mut rng)
        } else {
            let mut g = gstar.clone();
            let frac: f64 = rng.gen();
            for i in 0..n {
                if rng.gen::<f64>() < frac {
                    g.set_block(i, sample_uniform(spec, &mut rng).mat());
                }
            }
            g
        };
        let q = estimation_error(spec, &g, &gstar).expect("conformable").q;
        let (lhs, rhs) = condition_i(spec, &g, &gstar, &q);
        tally.record(lhs - rhs, 1e-6);
    }
    tally.finish(format!("rho inequality in {spec} with n = {n}"))
}

/// The default suite run by the command-line `check` command.
pub fn default_suite(seed: u64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for d in 2..=6 {
        out.push(projection_vs_enumeration(&GroupSpec::permutation(d).unwrap(), 200, seed));
    }
    for m in 1..=12 {
        out.push(projection_vs_enumeration(&GroupSpec::cyclic(m).unwrap(), 500, seed));
    }
    for d in [2, 3] {
        out.push(projection_vs_haar(&GroupSpec::orthogonal(d).unwrap(), 50, 2000, seed));
        out.push(projection_vs_haar(&GroupSpec::special_orthogonal(d).unwrap(), 50, 2000, seed));
    }
    let groups = [
        GroupSpec::orthogonal(3).unwrap(),
        GroupSpec::special_orthogonal(3).unwrap(),
        GroupSpec::permutation(5).unwrap(),
        GroupSpec::cyclic(3).unwrap(),
        GroupSpec::cyclic(6).unwrap(),
        GroupSpec::cyclic(12).unwrap(),
    ];
    for spec in &groups {
        out.push(contraction(spec, 10_000, seed));
    }
    for spec in &groups {
        out.push(rho_inequality(spec, 20, 1000, seed));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        assert!(projection_vs_enumeration(&GroupSpec::permutation(4).unwrap(), 50, 1).passed());
        assert!(projection_vs_enumeration(&GroupSpec::cyclic(7).unwrap(), 50, 1).passed());
        assert!(projection_vs_haar(&GroupSpec::special_orthogonal(3).unwrap(), 5, 200, 1).passed());
        assert!(contraction(&GroupSpec::cyclic(4).unwrap(), 300, 1).passed());
        assert!(rho_inequality(&GroupSpec::cyclic(6).unwrap(), 10, 100, 1).passed());
    }
}
