//! Problem instances: the measurement graph, observations, the assembled data
//! matrix `C`, and the exact graph/noise quantities used by the diagnostics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::blocklin::{BlockColumn, BlockSymMatrix, Diagonal, LinearMap};
use crate::error::{Error, Result};
use crate::groups::GroupSpec;
use crate::linalg::Mat;
use crate::par;

/// Observations keyed by `(i, j)` with `i < j`; the `(j, i)` observation is the
/// transpose.
pub type Observations = BTreeMap<(usize, usize), Mat>;

/// Undirected measurement graph on `0..n`. The extended graph adds a
/// self-loop at every node, so `w_ii = 1` and `r_i = 1 + deg(i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl MeasurementGraph {
    /// Validates the edge list and rejects disconnected graphs.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let g = Self::new_unchecked_connectivity(n, edges)?;
        let components = g.component_count();
        if components > 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(g)
    }

    /// Like [`MeasurementGraph::new`] but accepts disconnected graphs.
    pub fn new_unchecked_connectivity(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut list: Vec<(usize, usize)> = edges.into_iter().collect();
        for &(i, j) in &list {
            if i >= j || j >= n {
                return Err(Error::InvalidEdge(i, j));
            }
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidEdge(w[0].0, w[0].1));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &list {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Ok(Self {
            n,
            edges: list,
            neighbors,
        })
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Extended adjacency `w_ij` (self-loops included).
    pub fn w(&self, i: usize, j: usize) -> bool {
        i == j || self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Extended degree `r_i`.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len() + 1
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut components = 0;
        let mut stack = Vec::new();
        for s in 0..self.n {
            if seen[s] {
                continue;
            }
            components += 1;
            seen[s] = true;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &u in &self.neighbors[v] {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }
}

/// Graph connectivity parameters built from
/// `μ_jk = Σ_i w_ij w_ik / r_i²`:
/// `κ₁ = n·max_{j<k} |μ_jk − 1/n|`, `κ₂ = max_j (μ_jj − 1/n)`, `κ = κ₁ + κ₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityStats {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa: f64,
    /// Pair `(j, k)`, `j < k`, attaining κ₁.
    pub kappa1_argmax: Option<(usize, usize)>,
    /// Node attaining κ₂.
    pub kappa2_argmax: usize,
}

pub fn connectivity_stats(graph: &MeasurementGraph) -> ConnectivityStats {
    let n = graph.n();
    let inv_n = 1.0 / n as f64;

    // Terms of μ_jk are grouped by the degree r_i of the summation node and
    // counted exactly, so each class contributes one correctly rounded
    // quotient count/r². On regular graphs (in particular the complete graph)
    // μ_jk is then bit-identical to 1/n whenever the exact value is 1/n.
    let mut classes: Vec<usize> = graph.degrees();
    classes.sort_unstable();
    classes.dedup();
    let class_of: Vec<usize> = (0..n)
        .map(|i| classes.binary_search(&graph.degree(i)).expect("degree is listed"))
        .collect();
    let r2: Vec<f64> = classes.iter().map(|&r| (r * r) as f64).collect();

    let rows = par::map_range(n, |j| {
        let mut counts = vec![0u32; classes.len() * n];
        let closed_j = std::iter::once(j).chain(graph.neighbors(j).iter().copied());
        for i in closed_j {
            let base = class_of[i] * n;
            counts[base + i] += 1;
            for &k in graph.neighbors(i) {
                counts[base + k] += 1;
            }
        }
        let mu: Vec<f64> = (0..n)
            .map(|k| {
                (0..classes.len())
                    .map(|c| counts[c * n + k])
                    .zip(&r2)
                    .filter(|(cnt, _)| *cnt > 0)
                    .map(|(cnt, r2)| cnt as f64 / r2)
                    .sum()
            })
            .collect();
        let mut best = (0.0f64, None);
        for (k, &v) in mu.iter().enumerate().skip(j + 1) {
            let dev = (v - inv_n).abs();
            if best.1.is_none() || dev > best.0 {
                best = (dev, Some(k));
            }
        }
        (best, mu[j] - inv_n)
    });

    let mut kappa1_dev = 0.0f64;
    let mut kappa1_argmax = None;
    let mut kappa2 = f64::NEG_INFINITY;
    let mut kappa2_argmax = 0;
    for (j, ((dev, k), diag)) in rows.into_iter().enumerate() {
        if let Some(k) = k {
            if kappa1_argmax.is_none() || dev > kappa1_dev {
                kappa1_dev = dev;
                kappa1_argmax = Some((j, k));
            }
        }
        if diag > kappa2 {
            kappa2 = diag;
            kappa2_argmax = j;
        }
    }
    let kappa1 = n as f64 * kappa1_dev;
    ConnectivityStats {
        kappa1,
        kappa2,
        kappa: kappa1 + kappa2,
        kappa1_argmax,
        kappa2_argmax,
    }
}

/// Applies `D⁻¹`, scaling block `i` by `1/r_i`.
pub fn degree_inverse_apply(graph: &MeasurementGraph, y: &BlockColumn) -> Result<BlockColumn> {
    if y.n() != graph.n() {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} nodes, block column has {} blocks",
            graph.n(),
            y.n()
        )));
    }
    let d = y.d();
    let mut data = y.as_slice().to_vec();
    for (i, chunk) in data.chunks_mut(d * d).enumerate() {
        let s = 1.0 / graph.degree(i) as f64;
        chunk.iter_mut().for_each(|x| *x *= s);
    }
    BlockColumn::from_vec(y.n(), d, data)
}

/// Assembles the data matrix: `I_d` on the diagonal, `C_ij` at `(i, j)` and
/// `C_ijᵀ` at `(j, i)` for every edge, zero elsewhere.
pub fn assemble_c(graph: &MeasurementGraph, obs: &Observations, d: usize) -> Result<BlockSymMatrix> {
    for &(i, j) in obs.keys() {
        if graph.edges().binary_search(&(i, j)).is_err() {
            return Err(Error::UnexpectedObservation(i, j));
        }
    }
    let mut upper = Vec::with_capacity(graph.edges().len());
    for &(i, j) in graph.edges() {
        let block = obs.get(&(i, j)).ok_or(Error::MissingObservation(i, j))?;
        if block.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "observation ({i}, {j}) is {}x{}, expected {d}x{d}",
                block.rows(),
                block.cols()
            )));
        }
        if !block.is_finite() {
            return Err(Error::NonFinite);
        }
        upper.push(((i, j), block.clone()));
    }
    BlockSymMatrix::new(graph.n(), d, Diagonal::Identity, upper)
}

/// A synchronization problem instance. Immutable once built.
#[derive(Clone, Debug)]
pub struct Instance {
    spec: GroupSpec,
    graph: MeasurementGraph,
    observations: Observations,
    ground_truth: Option<BlockColumn>,
    c: BlockSymMatrix,
}

impl Instance {
    pub fn new(
        spec: GroupSpec,
        graph: MeasurementGraph,
        observations: Observations,
        ground_truth: Option<BlockColumn>,
    ) -> Result<Self> {
        if !graph.is_connected() {
            return Err(Error::Disconnected {
                components: graph.component_count(),
            });
        }
        let d = spec.dim();
        if let Some(g) = &ground_truth {
            if g.n() != graph.n() || g.d() != d {
                return Err(Error::DimensionMismatch(format!(
                    "ground truth has n = {}, d = {}; instance has n = {}, d = {d}",
                    g.n(),
                    g.d(),
                    graph.n()
                )));
            }
            for (i, b) in g.blocks().enumerate() {
                if let Some(reason) = spec.membership_violation(&b) {
                    return Err(Error::NotAMember {
                        group: format!("{spec} (ground truth block {i})"),
                        reason,
                    });
                }
            }
        }
        let c = assemble_c(&graph, &observations, d)?;
        Ok(Self {
            spec,
            graph,
            observations,
            ground_truth,
            c,
        })
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn graph(&self) -> &MeasurementGraph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn d(&self) -> usize {
        self.spec.dim()
    }

    pub fn observations(&self) -> &Observations {
        &self.observations
    }

    pub fn ground_truth(&self) -> Option<&BlockColumn> {
        self.ground_truth.as_ref()
    }

    /// The assembled data matrix `C`.
    pub fn data_matrix(&self) -> &BlockSymMatrix {
        &self.c
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&InstanceFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(s)?;
        file.try_into()
    }
}

/// `Δ = C − w∘(G*G*ᵀ)`: `C_ij − G*_i G*_jᵀ` on edges, zero elsewhere
/// (including the diagonal).
pub fn delta_matrix(instance: &Instance) -> Result<BlockSymMatrix> {
    let g = instance.ground_truth().ok_or(Error::GroundTruthRequired)?;
    let upper = instance.observations().iter().map(|(&(i, j), cij)| {
        let gram = g.block(i).matmul(&g.block(j).transpose());
        ((i, j), cij.sub(&gram))
    });
    BlockSymMatrix::new(instance.n(), instance.d(), Diagonal::Zero, upper)
}

/// The nonsymmetric map `D⁻¹Δ` on `R^{nd}`.
pub struct ScaledNoise<'a> {
    pub graph: &'a MeasurementGraph,
    pub delta: &'a BlockSymMatrix,
}

impl ScaledNoise<'_> {
    fn scale_rows(&self, mut x: Mat) -> Mat {
        let d = self.delta.d();
        let c = x.cols();
        for (i, chunk) in x.as_mut_slice().chunks_mut(d * c).enumerate() {
            let s = 1.0 / self.graph.degree(i) as f64;
            chunk.iter_mut().for_each(|v| *v *= s);
        }
        x
    }
}

impl LinearMap for ScaledNoise<'_> {
    fn nrows(&self) -> usize {
        self.delta.dim()
    }

    fn ncols(&self) -> usize {
        self.delta.dim()
    }

    fn apply(&self, x: &Mat) -> Mat {
        self.scale_rows(self.delta.apply(x).expect("operand conforms"))
    }

    fn apply_transpose(&self, x: &Mat) -> Mat {
        // (D⁻¹Δ)ᵀ = Δ D⁻¹ since both are symmetric.
        self.delta
            .apply(&self.scale_rows(x.clone()))
            .expect("operand conforms")
    }
}

#[derive(Serialize, Deserialize)]
struct ObservationRecord {
    i: usize,
    j: usize,
    block: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    spec: GroupSpec,
    n: usize,
    edges: Vec<[usize; 2]>,
    obs: Vec<ObservationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<Vec<f64>>,
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        InstanceFile {
            spec: inst.spec,
            n: inst.n(),
            edges: inst.graph.edges().iter().map(|&(i, j)| [i, j]).collect(),
            obs: inst
                .observations
                .iter()
                .map(|(&(i, j), m)| ObservationRecord {
                    i,
                    j,
                    block: m.as_slice().to_vec(),
                })
                .collect(),
            ground_truth: inst.ground_truth.as_ref().map(|g| g.as_slice().to_vec()),
        }
    }
}

impl TryFrom<InstanceFile> for Instance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        let d = f.spec.dim();
        let graph = MeasurementGraph::new(f.n, f.edges.iter().map(|e| (e[0], e[1])))?;
        let mut obs = Observations::new();
        for rec in f.obs {
            if rec.block.len() != d * d {
                return Err(Error::DimensionMismatch(format!(
                    "observation ({}, {}) has {} entries, expected {}",
                    rec.i,
                    rec.j,
                    rec.block.len(),
                    d * d
                )));
            }
            if rec.i >= rec.j {
                return Err(Error::InvalidEdge(rec.i, rec.j));
            }
            if obs.insert((rec.i, rec.j), Mat::from_vec(d, d, rec.block)).is_some() {
                return Err(Error::InvalidEdge(rec.i, rec.j));
            }
        }
        let gt = f
            .ground_truth
            .map(|v| BlockColumn::from_vec(f.n, d, v))
            .transpose()?;
        Instance::new(f.spec, graph, obs, gt)
    }
}
