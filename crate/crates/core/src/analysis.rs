//! Error metrics and an empirical checker for the hypotheses and conclusion
//! of the GPM convergence theorem.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::blocklin::{blockmatvec, operator_norm, BlockColumn, NormOptions};
use crate::error::{Error, Result};
use crate::groups::{project_unchecked, sample_uniform, GroupSpec};
use crate::linalg::Mat;
use crate::model::{connectivity_stats, degree_inverse_apply, delta_matrix, ConnectivityStats, Instance, ScaledNoise};
use crate::solver::SolveTrace;

/// Block threshold for counting a block as recovered after alignment.
pub const RECOVERY_TOL: f64 = 1e-6;
/// Absolute slack on the envelope inequality.
pub const ENVELOPE_SLACK: f64 = 1e-9;
/// Slack per node on condition (i), which compares O(n)-sized quantities.
pub const COND_I_SLACK_PER_NODE: f64 = 1e-9;

/// Thresholds of the theorem.
pub const KAPPA_MAX: f64 = 1.0 / 1024.0;
pub const DINV_DELTA_MAX: f64 = 1.0 / 32.0;
pub const CONTRACTION_RATE: f64 = 5.0 / 8.0;
pub const NOISE_FACTOR: f64 = 16.0 / 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    /// `min_Q ‖G − G*Q‖_F`.
    pub epsilon: f64,
    /// The minimizing `Q = Π(G*ᵀG)`.
    pub q: Mat,
}

fn check_conformable(g: &BlockColumn, gstar: &BlockColumn) -> Result<()> {
    if g.n() != gstar.n() || g.d() != gstar.d() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has n = {}, d = {}; ground truth has n = {}, d = {}",
            g.n(),
            g.d(),
            gstar.n(),
            gstar.d()
        )));
    }
    Ok(())
}

/// `ε(G) = ‖G − G*Q‖_F` with `Q = Π(G*ᵀG)`.
///
/// For `G, G* ∈ Gⁿ`, `‖G − G*Q‖² = 2nd − 2⟨G*ᵀG, Q⟩`, so the projection of
/// `G*ᵀG` is the exact minimizer over the group.
pub fn estimation_error(spec: &GroupSpec, g: &BlockColumn, gstar: &BlockColumn) -> Result<Alignment> {
    check_conformable(g, gstar)?;
    if g.d() != spec.dim() {
        return Err(Error::DimensionMismatch(format!("{spec} has d = {}", spec.dim())));
    }
    let m = gstar.tr_mul(g);
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let q = project_unchecked(spec, &m).element.into_mat();
    let epsilon = g.sub(&gstar.mul_right(&q)).frobenius_norm();
    Ok(Alignment { epsilon, q })
}

/// Both sides of `‖G*ᵀG − nQ‖_F ≤ ρ·Tr(nI_d − QᵀG*ᵀG)`.
pub fn condition_i(spec: &GroupSpec, g: &BlockColumn, gstar: &BlockColumn, q: &Mat) -> (f64, f64) {
    let n = g.n() as f64;
    let m = gstar.tr_mul(g);
    let lhs = m.sub(&q.scale(n)).frobenius_norm();
    let rhs = spec.rho() * (n * spec.dim() as f64 - q.dot(&m));
    (lhs, rhs)
}

/// Whether a pair from [`condition_i`] satisfies the inequality up to the
/// per-node slack.
pub fn condition_i_holds(n: usize, (lhs, rhs): (f64, f64)) -> bool {
    lhs <= rhs + COND_I_SLACK_PER_NODE * n as f64
}

/// Fraction of blocks with `‖G_i − G*_i Q‖_F ≤ 1e−6` after optimal alignment.
pub fn recovery_rate(spec: &GroupSpec, g: &BlockColumn, gstar: &BlockColumn) -> Result<f64> {
    let align = estimation_error(spec, g, gstar)?;
    let aligned = gstar.mul_right(&align.q);
    let hits = (0..g.n())
        .filter(|&i| g.block(i).sub(&aligned.block(i)).frobenius_norm() <= RECOVERY_TOL)
        .count();
    Ok(hits as f64 / g.n() as f64)
}

/// Hypotheses and conclusion of the convergence theorem evaluated on a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterReport {
    pub n: usize,
    pub d: usize,
    pub rho: f64,
    pub kappa: ConnectivityStats,
    /// `‖D⁻¹Δ‖`, spectral norm.
    pub op_norm_dinv_delta: f64,
    /// `‖D⁻¹ΔG*‖_F`.
    pub frob_norm_dinv_delta_gstar: f64,
    /// `ε(G⁰)`.
    pub eps0: f64,
    pub cond_i_per_iter: Vec<bool>,
    pub cond_i: bool,
    pub cond_ii: bool,
    pub cond_iii: bool,
    pub cond_iv: bool,
    pub all_conditions: bool,
    /// `(5/8)^{t+1} ε(G⁰) + (16/3)‖D⁻¹ΔG*‖_F` for each recorded `t`.
    pub envelope: Vec<f64>,
    /// Iterations `t ≥ 1` where `ε(G^t)` exceeds the envelope by more than
    /// the slack.
    pub envelope_violations: Vec<usize>,
    pub final_epsilon: f64,
}

/// Evaluates conditions (i)-(iv) and the error envelope for a recorded run.
pub fn master_report(instance: &Instance, trace: &SolveTrace) -> Result<MasterReport> {
    let gstar = instance.ground_truth().ok_or(Error::GroundTruthRequired)?;
    let epsilons: Vec<f64> = trace
        .entries
        .iter()
        .map(|e| e.epsilon.ok_or(Error::GroundTruthRequired))
        .collect::<Result<_>>()?;
    if epsilons.is_empty() {
        return Err(Error::InvalidParameter("the trace has no recorded iterates".into()));
    }
    let n = instance.n();
    let d = instance.d();
    let rho = instance.spec().rho();
    let sqrt_n = (n as f64).sqrt();

    let kappa = connectivity_stats(instance.graph());
    let delta = delta_matrix(instance)?;
    let op_norm_dinv_delta = operator_norm(
        &ScaledNoise {
            graph: instance.graph(),
            delta: &delta,
        },
        &NormOptions::default(),
    )?;
    let frob_norm_dinv_delta_gstar =
        degree_inverse_apply(instance.graph(), &blockmatvec(&delta, gstar)?)?.frobenius_norm();
    let eps0 = epsilons[0];

    let cond_i_per_iter: Vec<bool> = trace
        .entries
        .iter()
        .map(|e| e.cond_i.is_some_and(|c| condition_i_holds(n, c)))
        .collect();
    let cond_i = cond_i_per_iter.iter().all(|&b| b);
    let cond_ii = kappa.kappa <= KAPPA_MAX;
    let cond_iii = op_norm_dinv_delta <= DINV_DELTA_MAX && frob_norm_dinv_delta_gstar <= sqrt_n / (32.0 * rho);
    let cond_iv = eps0 <= sqrt_n / (2.0 * rho);

    let envelope: Vec<f64> = (0..epsilons.len())
        .map(|t| CONTRACTION_RATE.powi(t as i32 + 1) * eps0 + NOISE_FACTOR * frob_norm_dinv_delta_gstar)
        .collect();
    let envelope_violations = trace
        .entries
        .iter()
        .zip(epsilons.iter().zip(&envelope))
        .filter(|(e, (&eps, &bound))| e.iter >= 1 && eps > bound + ENVELOPE_SLACK)
        .map(|(e, _)| e.iter)
        .collect();

    Ok(MasterReport {
        n,
        d,
        rho,
        kappa,
        op_norm_dinv_delta,
        frob_norm_dinv_delta_gstar,
        eps0,
        cond_i_per_iter,
        cond_i,
        cond_ii,
        cond_iii,
        cond_iv,
        all_conditions: cond_i && cond_ii && cond_iii && cond_iv,
        envelope,
        envelope_violations,
        final_epsilon: *epsilons.last().expect("nonempty"),
    })
}

/// A triple `(r, X, Q)` for the contraction inequality.
#[derive(Clone, Debug)]
pub struct ContractionSample {
    pub r: f64,
    pub x: Mat,
    pub q: Mat,
}

/// `‖Π(X) − Q‖_F − 2‖X/r − Q‖_F`; nonpositive when the inequality holds.
pub fn contraction_excess(spec: &GroupSpec, s: &ContractionSample) -> f64 {
    let lhs = project_unchecked(spec, &s.x).element.mat().sub(&s.q).frobenius_norm();
    let rhs = 2.0 * s.x.scale(1.0 / s.r).sub(&s.q).frobenius_norm();
    lhs - rhs
}

/// True iff `‖Π(X) − Q‖_F ≤ 2‖X/r − Q‖_F + 1e−9` for every sample.
pub fn contraction_check(spec: &GroupSpec, samples: &[ContractionSample]) -> bool {
    samples.iter().all(|s| contraction_excess(spec, s) <= 1e-9)
}

/// Random contraction triples: `Q` uniform on the group, `r` cycling through
/// {0.1, 1, 10}, and `X = r(Q + E)` with a Gaussian perturbation `E` whose
/// scale is drawn log-uniformly so both near and far points are covered.
pub fn contraction_samples<R: Rng + ?Sized>(spec: &GroupSpec, count: usize, rng: &mut R) -> Vec<ContractionSample> {
    const RS: [f64; 3] = [0.1, 1.0, 10.0];
    let d = spec.dim();
    (0..count)
        .map(|k| {
            let r = RS[k % RS.len()];
            let q = sample_uniform(spec, rng).into_mat();
            let scale = 10f64.powf(rng.gen_range(-3.0..1.0));
            let e = Mat::from_fn(d, d, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
            let x = q.add(&e).scale(r);
            ContractionSample { r, x, q }
        })
        .collect()
}
