//! Spectral initialization and the generalized power method.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{condition_i, estimation_error};
use crate::blocklin::{blockmatvec, top_eigenvectors, BlockColumn, EigenOptions};
use crate::error::{Error, Result};
use crate::groups::{project_unchecked, GroupKind, GroupSpec};
use crate::linalg::Mat;
use crate::model::Instance;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub max_iters: usize,
    /// Bound on `‖G^{t+1} − G^t‖_F / √n` that ends the iteration.
    pub tol: f64,
    pub record_trace: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-10,
            record_trace: true,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("solve.max_iters must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidParameter(format!("solve.tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Blockwise projection of a block column onto Gⁿ.
#[derive(Clone, Debug)]
pub struct BlockProjection {
    pub estimate: BlockColumn,
    /// Blocks whose projection had no unique maximizer.
    pub degenerate: Vec<usize>,
}

/// `[Πⁿ(Y)]_i = Π([Y]_i)`, computed independently per block.
pub fn block_project_all(spec: &GroupSpec, y: &BlockColumn) -> Result<BlockProjection> {
    if y.d() != spec.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{spec} has d = {}, block column has d = {}",
            spec.dim(),
            y.d()
        )));
    }
    if !y.as_slice().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let projections = par::map_range(y.n(), |i| project_unchecked(spec, &y.block(i)));
    let degenerate = projections
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.degenerate.then_some(i))
        .collect();
    let blocks: Vec<Mat> = projections.into_iter().map(|p| p.element.into_mat()).collect();
    Ok(BlockProjection {
        estimate: BlockColumn::from_blocks(spec.dim(), &blocks)?,
        degenerate,
    })
}

#[derive(Clone, Debug)]
pub struct SpectralEstimate {
    pub estimate: BlockColumn,
    /// Top `d` eigenvalues of C, descending.
    pub eigenvalues: Vec<f64>,
    /// `λ_d − λ_{d+1}` when available.
    pub gap: Option<f64>,
    pub eigen_iterations: usize,
    pub degenerate: Vec<usize>,
}

/// `G_C = Πⁿ(V_C)` with `V_C` the top-`d` eigenvectors of C.
///
/// The eigenvector basis is only defined up to a right orthogonal factor.
/// For SO(d) and Z_m a reflection in that factor turns every block into an
/// improper matrix, where the projection is ill-posed, so the last column is
/// negated when `Σ_i det([V_C]_i) < 0`.
pub fn spectral_estimator(instance: &Instance, opts: &EigenOptions) -> Result<SpectralEstimate> {
    let spec = instance.spec();
    let d = instance.d();
    let pairs = top_eigenvectors(instance.data_matrix(), d, opts)?;
    let mut v = pairs.vectors;
    if matches!(spec.kind(), GroupKind::SpecialOrthogonal | GroupKind::Cyclic) {
        let col = BlockColumn::from_mat(d, v.clone())?;
        let det_sum: f64 = col.blocks().map(|b| b.det()).sum();
        if det_sum < 0.0 {
            v.negate_column(d - 1);
        }
    }
    let proj = block_project_all(spec, &BlockColumn::from_mat(d, v)?)?;
    Ok(SpectralEstimate {
        estimate: proj.estimate,
        eigenvalues: pairs.values,
        gap: pairs.gap,
        eigen_iterations: pairs.iterations,
        degenerate: proj.degenerate,
    })
}

/// One recorded iterate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    /// `ε(G^t)`; present when ground truth is known.
    pub epsilon: Option<f64>,
    /// `Tr(G^tᵀ C G^t)`.
    pub objective: f64,
    /// `‖G^t − G^{t−1}‖_F / √n`; absent at `t = 0`.
    pub step_norm: Option<f64>,
    /// Both sides of `‖G*ᵀG^t − nQ^t‖_F ≤ ρ·Tr(nI − Q^tᵀG*ᵀG^t)`.
    pub cond_i: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub entries: Vec<TraceEntry>,
    /// Alignment `Q` of the final iterate, when ground truth is known.
    pub final_q: Option<Vec<f64>>,
}

impl SolveTrace {
    /// CSV with columns `iter,epsilon,objective,step_norm`; missing values are
    /// left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,epsilon,objective,step_norm\n");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                e.iter,
                fmt(e.epsilon),
                fmt(Some(e.objective)),
                fmt(e.step_norm)
            );
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct GpmResult {
    pub estimate: BlockColumn,
    pub trace: SolveTrace,
    /// True when the step norm fell below the tolerance.
    pub converged: bool,
    /// Number of updates `G^t → G^{t+1}` performed.
    pub iterations: usize,
    pub final_step_norm: f64,
    /// Total number of degenerate block projections over the run.
    pub degenerate_projections: usize,
}

/// Generalized power method `G^{t+1} = Πⁿ(C G^t)` from `g0 ∈ Gⁿ`.
pub fn gpm(instance: &Instance, g0: &BlockColumn, cfg: &SolveConfig) -> Result<GpmResult> {
    cfg.validate()?;
    let spec = instance.spec();
    if g0.n() != instance.n() || g0.d() != instance.d() {
        return Err(Error::DimensionMismatch(format!(
            "initial point has n = {}, d = {}; instance has n = {}, d = {}",
            g0.n(),
            g0.d(),
            instance.n(),
            instance.d()
        )));
    }
    for (i, b) in g0.blocks().enumerate() {
        if let Some(reason) = spec.membership_violation(&b) {
            return Err(Error::NotAMember {
                group: spec.to_string(),
                reason: format!("initial block {i}: {reason}"),
            });
        }
    }

    let c = instance.data_matrix();
    let truth = instance.ground_truth();
    let sqrt_n = (instance.n() as f64).sqrt();

    let mut g = g0.clone();
    let mut trace = SolveTrace::default();
    let mut iterations = 0;
    let mut converged = false;
    let mut step: Option<f64> = None;
    let mut degenerate_projections = 0;
    loop {
        let y = blockmatvec(c, &g)?;
        if cfg.record_trace {
            let (epsilon, cond) = match truth {
                Some(t) => {
                    let align = estimation_error(spec, &g, t)?;
                    let ci = condition_i(spec, &g, t, &align.q);
                    (Some(align.epsilon), Some(ci))
                }
                None => (None, None),
            };
            trace.entries.push(TraceEntry {
                iter: iterations,
                epsilon,
                objective: g.dot(&y),
                step_norm: step,
                cond_i: cond,
            });
        }
        if converged || iterations == cfg.max_iters {
            break;
        }
        let next = block_project_all(spec, &y)?;
        degenerate_projections += next.degenerate.len();
        let s = next.estimate.sub(&g).frobenius_norm() / sqrt_n;
        g = next.estimate;
        step = Some(s);
        iterations += 1;
        converged = s <= cfg.tol;
    }
    if let Some(t) = truth {
        trace.final_q = Some(estimation_error(spec, &g, t)?.q.into_vec());
    }
    Ok(GpmResult {
        estimate: g,
        trace,
        converged,
        iterations,
        final_step_norm: step.unwrap_or(0.0),
        degenerate_projections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{generate_instance, GenerateConfig, GraphConfig, NoiseConfig};

    fn noiseless(spec: GroupSpec, n: usize, p: f64, seed: u64) -> Instance {
        generate_instance(&GenerateConfig {
            spec,
            graph: GraphConfig { n, p },
            noise: NoiseConfig::AdditiveGaussian { sigma: 0.0 },
            seed,
        })
        .unwrap()
    }

    #[test]
    fn ground_truth_start_is_a_fixed_point() {
        let inst = noiseless(GroupSpec::special_orthogonal(3).unwrap(), 15, 1.0, 2);
        let g0 = inst.ground_truth().unwrap().clone();
        let res = gpm(&inst, &g0, &SolveConfig::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert!(res.estimate.sub(&g0).frobenius_norm() < 1e-12);
        assert_eq!(res.trace.entries.len(), 2);
        assert_eq!(res.trace.entries[0].step_norm, None);
    }

    #[test]
    fn spectral_recovers_noiseless_instances() {
        for spec in [
            GroupSpec::orthogonal(3).unwrap(),
            GroupSpec::special_orthogonal(3).unwrap(),
            GroupSpec::permutation(4).unwrap(),
            GroupSpec::cyclic(7).unwrap(),
        ] {
            let inst = noiseless(spec, 20, 0.5, 11);
            let est = spectral_estimator(&inst, &EigenOptions::default()).unwrap();
            let eps = estimation_error(&spec, &est.estimate, inst.ground_truth().unwrap())
                .unwrap()
                .epsilon;
            assert!(eps < 1e-6, "{spec}: ε = {eps}");
        }
    }

    #[test]
    fn iterates_stay_feasible() {
        let inst = generate_instance(&GenerateConfig {
            spec: GroupSpec::cyclic(5).unwrap(),
            graph: GraphConfig { n: 30, p: 0.6 },
            noise: NoiseConfig::Outlier { q: 0.6 },
            seed: 5,
        })
        .unwrap();
        let spec = *inst.spec();
        let g0 = spectral_estimator(&inst, &EigenOptions::default()).unwrap().estimate;
        let res = gpm(&inst, &g0, &SolveConfig { max_iters: 5, ..Default::default() }).unwrap();
        assert!(res.estimate.blocks().all(|b| spec.contains(&b)));
        assert!(res.iterations <= 5);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let inst = noiseless(GroupSpec::orthogonal(2).unwrap(), 5, 1.0, 1);
        let bad = inst.ground_truth().unwrap().scale(2.0);
        assert!(matches!(
            gpm(&inst, &bad, &SolveConfig::default()),
            Err(Error::NotAMember { .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let trace = SolveTrace {
            entries: vec![
                TraceEntry {
                    iter: 0,
                    epsilon: None,
                    objective: 1.5,
                    step_norm: None,
                    cond_i: None,
                },
                TraceEntry {
                    iter: 1,
                    epsilon: Some(0.25),
                    objective: 2.0,
                    step_norm: Some(0.1),
                    cond_i: None,
                },
            ],
            final_q: None,
        };
        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iter,epsilon,objective,step_norm");
        assert_eq!(lines[1], "0,,1.5000000000000000e0,");
        assert_eq!(lines[2], "1,2.5000000000000000e-1,2.0000000000000000e0,1.0000000000000001e-1");
    }
}
