//! Seeded synthetic instances: Erdős–Rényi measurement graphs, Haar ground
//! truth, and the additive and multiplicative noise models.
//!
//! Every random draw comes from a ChaCha8 stream derived from the config
//! seed. The graph and the ground truth use fixed streams and each edge
//! `(i, j)` gets its own stream keyed by `i·n + j`, so observation noise does
//! not depend on generation order and edges can be generated in parallel.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::blocklin::BlockColumn;
use crate::error::{Error, Result};
use crate::groups::{cyclic_element, project_permutation, sample_uniform, GroupElement, GroupKind, GroupSpec};
use crate::linalg::Mat;
use crate::model::{Instance, MeasurementGraph, Observations};
use crate::par;

/// Maximum number of graph draws before giving up on connectivity.
pub const MAX_GRAPH_ATTEMPTS: usize = 100;

const GRAPH_STREAM: u64 = 0;
const TRUTH_STREAM: u64 = 1;
const EDGE_STREAM_BASE: u64 = 2;

/// The RNG for a named substream of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub n: usize,
    /// Observation rate in (0, 1].
    pub p: f64,
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("graph.n must be at least 2, got {}", self.n)));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::InvalidParameter(format!("graph.p must lie in (0, 1], got {}", self.p)));
        }
        Ok(())
    }
}

/// Observation noise models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    /// `C_ij = G*_i G*_jᵀ + Θ_ij`, entries of Θ i.i.d. N(0, σ²).
    AdditiveGaussian { sigma: f64 },
    /// `C_ij = G*_i G*_jᵀ + Θ_ij`, entries of Θ i.i.d. U(−bound, bound).
    AdditiveUniform { bound: f64 },
    /// `C_ij = G*_i G*_jᵀ Θ^out Θ^Lang` on SO(3): Θ^out is the identity with
    /// probability `q` and Haar-uniform otherwise; Θ^Lang has density
    /// ∝ exp(γ Tr Θ).
    OutlierLangevin { q: f64, gamma: f64 },
    /// `C_ij = G*_i G*_jᵀ Θ^out` on Z_m: Θ^out is `I₂` with probability `q`
    /// and `Q_k`, `k` uniform on `{0, …, m−1}`, otherwise.
    Outlier { q: f64 },
    /// `C_ij = Π_P(G*_i G*_jᵀ + δ W_ij)` on P(d), `W_ij` standard Gaussian.
    ProjectedAdditive { delta: f64 },
}

impl NoiseConfig {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseConfig::AdditiveGaussian { .. } => "additive_gaussian",
            NoiseConfig::AdditiveUniform { .. } => "additive_uniform",
            NoiseConfig::OutlierLangevin { .. } => "outlier_langevin",
            NoiseConfig::Outlier { .. } => "outlier",
            NoiseConfig::ProjectedAdditive { .. } => "projected_additive",
        }
    }

    /// Checks parameter ranges and compatibility with the group.
    pub fn validate(&self, spec: &GroupSpec) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("noise.{name} must be finite and ≥ 0, got {v}")))
            }
        };
        let prob = |q: f64| {
            if q > 0.0 && q <= 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("noise.q must lie in (0, 1], got {q}")))
            }
        };
        match *self {
            NoiseConfig::AdditiveGaussian { sigma } => nonneg("sigma", sigma),
            NoiseConfig::AdditiveUniform { bound } => nonneg("bound", bound),
            NoiseConfig::OutlierLangevin { q, gamma } => {
                prob(q)?;
                nonneg("gamma", gamma)?;
                if spec.kind() != GroupKind::SpecialOrthogonal || spec.dim() != 3 {
                    return Err(Error::IncompatibleNoise {
                        model: self.name(),
                        required: "group SO(3)",
                    });
                }
                Ok(())
            }
            NoiseConfig::Outlier { q } => {
                prob(q)?;
                if spec.kind() != GroupKind::Cyclic {
                    return Err(Error::IncompatibleNoise {
                        model: self.name(),
                        required: "a cyclic group",
                    });
                }
                Ok(())
            }
            NoiseConfig::ProjectedAdditive { delta } => {
                nonneg("delta", delta)?;
                if spec.kind() != GroupKind::Permutation {
                    return Err(Error::IncompatibleNoise {
                        model: self.name(),
                        required: "a permutation group",
                    });
                }
                Ok(())
            }
        }
    }
}

/// Everything needed to reproduce one synthetic instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub spec: GroupSpec,
    pub graph: GraphConfig,
    pub noise: NoiseConfig,
    pub seed: u64,
}

/// Erdős–Rényi graph: each pair `i < j` is an edge independently with
/// probability `p`. Disconnected draws are discarded.
pub fn gen_graph<R: Rng + ?Sized>(cfg: &GraphConfig, rng: &mut R) -> Result<MeasurementGraph> {
    cfg.validate()?;
    let n = cfg.n;
    for _ in 0..MAX_GRAPH_ATTEMPTS {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if cfg.p >= 1.0 || rng.gen::<f64>() < cfg.p {
                    edges.push((i, j));
                }
            }
        }
        let g = MeasurementGraph::new_unchecked_connectivity(n, edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::GraphGeneration {
        attempts: MAX_GRAPH_ATTEMPTS,
        n,
        p: cfg.p,
    })
}

/// `n` i.i.d. Haar-uniform group elements.
pub fn gen_ground_truth<R: Rng + ?Sized>(spec: &GroupSpec, n: usize, rng: &mut R) -> BlockColumn {
    let blocks: Vec<Mat> = (0..n).map(|_| sample_uniform(spec, rng).into_mat()).collect();
    BlockColumn::from_blocks(spec.dim(), &blocks).expect("blocks have the group dimension")
}

/// Draws from the Langevin distribution on SO(3) with mean `I₃`, i.e. with
/// density ∝ exp(γ Tr R) against Haar measure.
///
/// The rotation angle φ of a Haar rotation has density (1 − cos φ)/π on
/// [0, π]; tilting it by exp(γ(1 + 2cos φ)) gives the target angle law.
/// Angles are drawn by rejection from the Haar law with acceptance
/// probability exp(2γ(cos φ − 1)), and the axis is uniform on the sphere.
pub fn sample_langevin_so3<R: Rng + ?Sized>(gamma: f64, rng: &mut R) -> GroupElement {
    let angle = sample_langevin_angle(gamma, rng);
    let axis = sample_unit_vector(rng);
    GroupElement::from_mat_unchecked(axis_angle(axis, angle))
}

/// The rotation angle of a Langevin draw; see [`sample_langevin_so3`].
pub fn sample_langevin_angle<R: Rng + ?Sized>(gamma: f64, rng: &mut R) -> f64 {
    loop {
        let phi = sample_haar_angle(rng);
        if gamma == 0.0 {
            return phi;
        }
        let accept = (2.0 * gamma * (phi.cos() - 1.0)).exp();
        if rng.gen::<f64>() < accept {
            return phi;
        }
    }
}

/// Rotation angle of a Haar-uniform rotation, via a uniform unit quaternion.
fn sample_haar_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    2.0 * (q[0].abs() / norm).min(1.0).acos()
}

fn sample_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.map(|x| x / norm);
        }
    }
}

/// Rodrigues' formula.
fn axis_angle(k: [f64; 3], phi: f64) -> Mat {
    let (s, c) = phi.sin_cos();
    let t = 1.0 - c;
    let [x, y, z] = k;
    Mat::from_rows(&[
        [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
        [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
        [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
    ])
}

/// One observation per edge under the given noise model.
pub fn gen_observations(
    spec: &GroupSpec,
    graph: &MeasurementGraph,
    ground_truth: &BlockColumn,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<Observations> {
    noise.validate(spec)?;
    if ground_truth.n() != graph.n() || ground_truth.d() != spec.dim() {
        return Err(Error::DimensionMismatch("ground truth does not match graph and group".into()));
    }
    let n = graph.n();
    let d = spec.dim();
    let edges = graph.edges();
    let blocks = par::map_range(edges.len(), |e| {
        let (i, j) = edges[e];
        let mut rng = substream(seed, EDGE_STREAM_BASE + (i * n + j) as u64);
        let clean = ground_truth.block(i).matmul(&ground_truth.block(j).transpose());
        match *noise {
            NoiseConfig::AdditiveGaussian { sigma } => {
                clean.add(&Mat::from_fn(d, d, |_, _| sigma * rng.sample::<f64, _>(StandardNormal)))
            }
            NoiseConfig::AdditiveUniform { bound } => {
                if bound == 0.0 {
                    clean
                } else {
                    let u = Uniform::new_inclusive(-bound, bound);
                    clean.add(&Mat::from_fn(d, d, |_, _| u.sample(&mut rng)))
                }
            }
            NoiseConfig::OutlierLangevin { q, gamma } => {
                let outlier = if rng.gen::<f64>() < q {
                    Mat::identity(3)
                } else {
                    sample_uniform(spec, &mut rng).into_mat()
                };
                let lang = sample_langevin_so3(gamma, &mut rng).into_mat();
                clean.matmul(&outlier).matmul(&lang)
            }
            NoiseConfig::Outlier { q } => {
                let m = spec.order().unwrap_or(1);
                if rng.gen::<f64>() < q {
                    clean
                } else {
                    clean.matmul(&cyclic_element(rng.gen_range(0..m), m))
                }
            }
            NoiseConfig::ProjectedAdditive { delta } => {
                let w = Mat::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
                project_permutation(&clean.add(&w.scale(delta))).into_mat()
            }
        }
    });
    Ok(edges.iter().copied().zip(blocks).collect())
}

/// Generates a full instance from a config.
pub fn generate_instance(cfg: &GenerateConfig) -> Result<Instance> {
    cfg.graph.validate()?;
    cfg.noise.validate(&cfg.spec)?;
    let graph = gen_graph(&cfg.graph, &mut substream(cfg.seed, GRAPH_STREAM))?;
    let truth = gen_ground_truth(&cfg.spec, cfg.graph.n, &mut substream(cfg.seed, TRUTH_STREAM));
    let obs = gen_observations(&cfg.spec, &graph, &truth, &cfg.noise, cfg.seed)?;
    Instance::new(cfg.spec, graph, obs, Some(truth))
}

/// Mean of `Tr Θ` under the Langevin law, by Simpson quadrature over the
/// rotation angle. Used as a reference value by diagnostics and tests.
pub fn langevin_mean_trace(gamma: f64) -> f64 {
    let steps = 20_000;
    let h = PI / steps as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for s in 0..=steps {
        let phi = s as f64 * h;
        let wgt = if s == 0 || s == steps {
            1.0
        } else if s % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let dens = (2.0 * gamma * (phi.cos() - 1.0)).exp() * (1.0 - phi.cos());
        num += wgt * (1.0 + 2.0 * phi.cos()) * dens;
        den += wgt * dens;
    }
    num / den
}
