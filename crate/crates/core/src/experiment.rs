//! Seeded parameter sweeps: many independent trials of spectral + GPM per
//! sweep value, with per-trial rows and per-value means.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{estimation_error, recovery_rate};
use crate::blocklin::EigenOptions;
use crate::error::{Error, Result};
use crate::gen::{generate_instance, GenerateConfig, GraphConfig, NoiseConfig};
use crate::groups::GroupSpec;
use crate::par;
use crate::solver::{gpm, spectral_estimator, SolveConfig};

/// Odd stride between trial seeds (the 64-bit golden ratio constant).
pub const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Parameters that a sweep can vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    N,
    P,
    Sigma,
    Bound,
    Q,
    /// `1 − q`.
    OutlierFraction,
    Gamma,
    Delta,
    /// Order of a cyclic group.
    M,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

fn default_trials() -> usize {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec: GroupSpec,
    pub graph: GraphConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub solve: SolveConfig,
    pub sweep: Sweep,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed_base: u64,
}

fn as_count(param: &str, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(Error::InvalidParameter(format!("sweep value {v} is not a valid {param}")))
    }
}

impl ExperimentConfig {
    /// Seed of trial `trial`; shared by every sweep value.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed_base.wrapping_add((trial as u64).wrapping_mul(SEED_STRIDE))
    }

    /// Generation settings at one sweep value, with the seed left at 0.
    pub fn at(&self, value: f64) -> Result<GenerateConfig> {
        let mut spec = self.spec;
        let mut graph = self.graph;
        let mut noise = self.noise;
        let mismatch = || {
            Error::InvalidParameter(format!(
                "sweep parameter {:?} does not apply to noise model {}",
                self.sweep.param,
                self.noise.name()
            ))
        };
        match (self.sweep.param, &mut noise) {
            (SweepParam::N, _) => graph.n = as_count("n", value)?,
            (SweepParam::P, _) => graph.p = value,
            (SweepParam::M, _) => spec = GroupSpec::cyclic(as_count("m", value)?)?,
            (SweepParam::Sigma, NoiseConfig::AdditiveGaussian { sigma }) => *sigma = value,
            (SweepParam::Bound, NoiseConfig::AdditiveUniform { bound }) => *bound = value,
            (SweepParam::Q, NoiseConfig::OutlierLangevin { q, .. } | NoiseConfig::Outlier { q }) => *q = value,
            (SweepParam::OutlierFraction, NoiseConfig::OutlierLangevin { q, .. } | NoiseConfig::Outlier { q }) => {
                *q = 1.0 - value
            }
            (SweepParam::Gamma, NoiseConfig::OutlierLangevin { gamma, .. }) => *gamma = value,
            (SweepParam::Delta, NoiseConfig::ProjectedAdditive { delta }) => *delta = value,
            _ => return Err(mismatch()),
        }
        if self.sweep.param == SweepParam::M && self.spec.kind() != crate::groups::GroupKind::Cyclic {
            return Err(Error::InvalidParameter("sweeping m requires a cyclic group".into()));
        }
        graph.validate()?;
        noise.validate(&spec)?;
        Ok(GenerateConfig {
            spec,
            graph,
            noise,
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::InvalidParameter("sweep.values must not be empty".into()));
        }
        self.solve.validate()?;
        for &v in &self.sweep.values {
            self.at(v)?;
        }
        Ok(())
    }
}

/// One trial. Metrics are absent when the trial failed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub eps_spectral: Option<f64>,
    pub eps_gpm: Option<f64>,
    pub rec_spectral: Option<f64>,
    pub rec_gpm: Option<f64>,
    pub iterations: Option<usize>,
    pub time_spectral: Option<f64>,
    pub time_gpm: Option<f64>,
    /// Spectral plus GPM wall time.
    pub time_total: Option<f64>,
    pub failed: bool,
    pub error: String,
}

/// Means over the successful trials at one sweep value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub sweep_value: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub eps_spectral: Option<f64>,
    pub eps_gpm: Option<f64>,
    pub rec_spectral: Option<f64>,
    pub rec_gpm: Option<f64>,
    pub iterations: Option<f64>,
    pub time_spectral: Option<f64>,
    pub time_gpm: Option<f64>,
    pub time_total: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub trials: Vec<TrialRow>,
    pub aggregates: Vec<AggregateRow>,
}

struct TrialMetrics {
    eps_spectral: f64,
    eps_gpm: f64,
    rec_spectral: f64,
    rec_gpm: f64,
    iterations: usize,
    time_spectral: f64,
    time_gpm: f64,
}

fn run_metrics(cfg: &GenerateConfig, solve: &SolveConfig) -> Result<TrialMetrics> {
    let inst = generate_instance(cfg)?;
    let spec = inst.spec();
    let truth = inst.ground_truth().ok_or(Error::GroundTruthRequired)?;

    let start = Instant::now();
    let spectral = spectral_estimator(&inst, &EigenOptions::default())?;
    let time_spectral = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let res = gpm(&inst, &spectral.estimate, solve)?;
    let time_gpm = start.elapsed().as_secs_f64();

    Ok(TrialMetrics {
        eps_spectral: estimation_error(spec, &spectral.estimate, truth)?.epsilon,
        eps_gpm: estimation_error(spec, &res.estimate, truth)?.epsilon,
        rec_spectral: recovery_rate(spec, &spectral.estimate, truth)?,
        rec_gpm: recovery_rate(spec, &res.estimate, truth)?,
        iterations: res.iterations,
        time_spectral,
        time_gpm,
    })
}

/// Runs one trial; failures are captured in the row.
pub fn run_trial(cfg: &GenerateConfig, solve: &SolveConfig, sweep_value: f64, trial: usize) -> TrialRow {
    let mut row = TrialRow {
        sweep_value,
        trial,
        seed: cfg.seed,
        eps_spectral: None,
        eps_gpm: None,
        rec_spectral: None,
        rec_gpm: None,
        iterations: None,
        time_spectral: None,
        time_gpm: None,
        time_total: None,
        failed: false,
        error: String::new(),
    };
    match run_metrics(cfg, solve) {
        Ok(m) => {
            row.eps_spectral = Some(m.eps_spectral);
            row.eps_gpm = Some(m.eps_gpm);
            row.rec_spectral = Some(m.rec_spectral);
            row.rec_gpm = Some(m.rec_gpm);
            row.iterations = Some(m.iterations);
            row.time_spectral = Some(m.time_spectral);
            row.time_gpm = Some(m.time_gpm);
            row.time_total = Some(m.time_spectral + m.time_gpm);
        }
        Err(e) => {
            row.failed = true;
            row.error = e.to_string();
        }
    }
    row
}

fn mean(rows: &[&TrialRow], f: impl Fn(&TrialRow) -> Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Per-value means of the successful trials, in sweep order.
pub fn aggregate(values: &[f64], rows: &[TrialRow]) -> Vec<AggregateRow> {
    values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            // Rows are grouped by sweep index, so equal sweep values stay apart.
            let trials = rows.len() / values.len().max(1);
            let group: Vec<&TrialRow> = rows[k * trials..(k + 1) * trials].iter().collect();
            let ok: Vec<&TrialRow> = group.iter().copied().filter(|r| !r.failed).collect();
            AggregateRow {
                sweep_value: v,
                trials_ok: ok.len(),
                trials_failed: group.len() - ok.len(),
                eps_spectral: mean(&ok, |r| r.eps_spectral),
                eps_gpm: mean(&ok, |r| r.eps_gpm),
                rec_spectral: mean(&ok, |r| r.rec_spectral),
                rec_gpm: mean(&ok, |r| r.rec_gpm),
                iterations: mean(&ok, |r| r.iterations.map(|i| i as f64)),
                time_spectral: mean(&ok, |r| r.time_spectral),
                time_gpm: mean(&ok, |r| r.time_gpm),
                time_total: mean(&ok, |r| r.time_total),
            }
        })
        .collect()
}

/// Runs every (sweep value, trial) pair. Trials execute concurrently but the
/// rows come back ordered by sweep index, then trial.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let solve = SolveConfig {
        record_trace: false,
        ..cfg.solve
    };
    let trials = cfg.trials;
    let values = &cfg.sweep.values;
    let gens: Vec<GenerateConfig> = values.iter().map(|&v| cfg.at(v)).collect::<Result<_>>()?;
    let rows = par::map_range(values.len() * trials, |idx| {
        let (k, t) = (idx / trials, idx % trials);
        let gen = GenerateConfig {
            seed: cfg.trial_seed(t),
            ..gens[k]
        };
        run_trial(&gen, &solve, values[k], t)
    });
    let aggregates = aggregate(values, &rows);
    Ok(ExperimentResult {
        trials: rows,
        aggregates,
    })
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

impl ExperimentResult {
    pub fn trials_csv(&self) -> Result<String> {
        to_csv(&self.trials)
    }

    pub fn aggregate_csv(&self) -> Result<String> {
        to_csv(&self.aggregates)
    }
}
