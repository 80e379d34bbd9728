//! Block-structured linear algebra on `nd×d` block columns and sparse
//! symmetric `nd×nd` block matrices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{orthonormalize_columns, sym_eigen_jacobi, Mat};
use crate::par;

/// An `n`-stack of `d×d` blocks stored contiguously; block `i` occupies
/// `data[i·d²..(i+1)·d²]` in row-major order. Equivalently the row-major
/// storage of an `nd×d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockColumn {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl BlockColumn {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            data: vec![0.0; n * d * d],
        }
    }

    pub fn from_vec(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d * d {
            return Err(Error::DimensionMismatch(format!(
                "block column with n = {n}, d = {d} needs {} entries, got {}",
                n * d * d,
                data.len()
            )));
        }
        Ok(Self { n, d, data })
    }

    pub fn from_blocks(d: usize, blocks: &[Mat]) -> Result<Self> {
        let mut data = Vec::with_capacity(blocks.len() * d * d);
        for (i, b) in blocks.iter().enumerate() {
            if b.shape() != (d, d) {
                return Err(Error::DimensionMismatch(format!(
                    "block {i} is {}x{}, expected {d}x{d}",
                    b.rows(),
                    b.cols()
                )));
            }
            data.extend_from_slice(b.as_slice());
        }
        Ok(Self {
            n: blocks.len(),
            d,
            data,
        })
    }

    /// Interprets an `nd×d` matrix as a block column.
    pub fn from_mat(d: usize, m: Mat) -> Result<Self> {
        if m.cols() != d || d == 0 || !m.rows().is_multiple_of(d) {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix is not an nd x d block column for d = {d}",
                m.rows(),
                m.cols()
            )));
        }
        let n = m.rows() / d;
        Ok(Self {
            n,
            d,
            data: m.into_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn block_slice(&self, i: usize) -> &[f64] {
        let s = self.d * self.d;
        &self.data[i * s..(i + 1) * s]
    }

    pub fn block(&self, i: usize) -> Mat {
        Mat::from_vec(self.d, self.d, self.block_slice(i).to_vec())
    }

    pub fn set_block(&mut self, i: usize, b: &Mat) {
        assert_eq!(b.shape(), (self.d, self.d), "block shape mismatch");
        let s = self.d * self.d;
        self.data[i * s..(i + 1) * s].copy_from_slice(b.as_slice());
    }

    pub fn blocks(&self) -> impl Iterator<Item = Mat> + '_ {
        (0..self.n).map(move |i| self.block(i))
    }

    /// The `nd×d` matrix view.
    pub fn to_mat(&self) -> Mat {
        Mat::from_vec(self.n * self.d, self.d, self.data.clone())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `⟨self, other⟩ = Tr(selfᵀ other)`.
    pub fn dot(&self, other: &BlockColumn) -> f64 {
        assert_eq!((self.n, self.d), (other.n, other.d), "block column shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sub(&self, other: &BlockColumn) -> BlockColumn {
        assert_eq!((self.n, self.d), (other.n, other.d), "block column shape mismatch");
        BlockColumn {
            n: self.n,
            d: self.d,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> BlockColumn {
        BlockColumn {
            n: self.n,
            d: self.d,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// `selfᵀ · other = Σ_i [self]_iᵀ [other]_i`, a `d×d` matrix.
    pub fn tr_mul(&self, other: &BlockColumn) -> Mat {
        assert_eq!((self.n, self.d), (other.n, other.d), "block column shape mismatch");
        let d = self.d;
        let mut out = Mat::zeros(d, d);
        for i in 0..self.n {
            let a = self.block_slice(i);
            let b = other.block_slice(i);
            for r in 0..d {
                for k in 0..d {
                    let ark = a[r * d + k];
                    for c in 0..d {
                        out[(k, c)] += ark * b[r * d + c];
                    }
                }
            }
        }
        out
    }

    /// Right-multiplies every block by `q`.
    pub fn mul_right(&self, q: &Mat) -> BlockColumn {
        assert_eq!(q.shape(), (self.d, self.d), "right factor shape mismatch");
        BlockColumn::from_mat(self.d, self.to_mat().matmul(q)).expect("shape preserved")
    }
}

/// Diagonal blocks of a [`BlockSymMatrix`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Diagonal {
    Zero,
    Identity,
}

#[derive(Clone, Copy, Debug)]
struct RowEntry {
    col: usize,
    block: usize,
    transpose: bool,
}

/// Symmetric `nd×nd` block matrix with blocks stored for `i < j` only;
/// `[M]_{ji} = [M]_{ij}ᵀ` holds by construction.
#[derive(Clone, Debug)]
pub struct BlockSymMatrix {
    n: usize,
    d: usize,
    diagonal: Diagonal,
    pairs: Vec<(usize, usize)>,
    blocks: Vec<f64>,
    rows: Vec<Vec<RowEntry>>,
}

impl BlockSymMatrix {
    /// Builds from upper-triangular blocks `((i, j), M_ij)` with `i < j`.
    /// Duplicate pairs are rejected.
    pub fn new(
        n: usize,
        d: usize,
        diagonal: Diagonal,
        upper: impl IntoIterator<Item = ((usize, usize), Mat)>,
    ) -> Result<Self> {
        let mut entries: Vec<((usize, usize), Mat)> = upper.into_iter().collect();
        entries.sort_by_key(|(p, _)| *p);
        let mut pairs = Vec::with_capacity(entries.len());
        let mut blocks = Vec::with_capacity(entries.len() * d * d);
        let mut rows = vec![Vec::new(); n];
        for (idx, ((i, j), m)) in entries.into_iter().enumerate() {
            if i >= j || j >= n {
                return Err(Error::InvalidEdge(i, j));
            }
            if pairs.last() == Some(&(i, j)) {
                return Err(Error::InvalidEdge(i, j));
            }
            if m.shape() != (d, d) {
                return Err(Error::DimensionMismatch(format!(
                    "block ({i}, {j}) is {}x{}, expected {d}x{d}",
                    m.rows(),
                    m.cols()
                )));
            }
            pairs.push((i, j));
            blocks.extend_from_slice(m.as_slice());
            rows[i].push(RowEntry {
                col: j,
                block: idx,
                transpose: false,
            });
            rows[j].push(RowEntry {
                col: i,
                block: idx,
                transpose: true,
            });
        }
        for r in &mut rows {
            r.sort_by_key(|e| e.col);
        }
        Ok(Self {
            n,
            d,
            diagonal,
            pairs,
            blocks,
            rows,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.n * self.d
    }

    pub fn diagonal(&self) -> Diagonal {
        self.diagonal
    }

    /// Stored `(i, j)` pairs with `i < j`, sorted.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    fn stored(&self, idx: usize) -> &[f64] {
        let s = self.d * self.d;
        &self.blocks[idx * s..(idx + 1) * s]
    }

    /// Block `[M]_{ij}`, or `None` for a structurally zero block.
    pub fn block(&self, i: usize, j: usize) -> Option<Mat> {
        if i == j {
            return match self.diagonal {
                Diagonal::Identity => Some(Mat::identity(self.d)),
                Diagonal::Zero => None,
            };
        }
        let e = self.rows[i].iter().find(|e| e.col == j)?;
        let m = Mat::from_vec(self.d, self.d, self.stored(e.block).to_vec());
        Some(if e.transpose { m.transpose() } else { m })
    }

    pub fn to_dense(&self) -> Mat {
        let d = self.d;
        let mut out = Mat::zeros(self.dim(), self.dim());
        for i in 0..self.n {
            for j in 0..self.n {
                if let Some(b) = self.block(i, j) {
                    for r in 0..d {
                        for c in 0..d {
                            out[(i * d + r, j * d + c)] = b[(r, c)];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        let off: f64 = self.blocks.iter().map(|x| x * x).sum();
        let diag = match self.diagonal {
            Diagonal::Identity => (self.n * self.d) as f64,
            Diagonal::Zero => 0.0,
        };
        (2.0 * off + diag).sqrt()
    }

    /// Applies the matrix to an `nd×c` row-major matrix. Block rows are
    /// computed independently (in parallel with the `parallel` feature).
    pub fn apply(&self, y: &Mat) -> Result<Mat> {
        if y.rows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator is {0}x{0}, operand has {1} rows",
                self.dim(),
                y.rows()
            )));
        }
        let (d, c) = (self.d, y.cols());
        let mut out = Mat::zeros(self.dim(), c);
        let ys = y.as_slice();
        par::for_each_chunk_mut(out.as_mut_slice(), d * c, |i, acc| {
            if self.diagonal == Diagonal::Identity {
                acc.copy_from_slice(&ys[i * d * c..(i + 1) * d * c]);
            }
            for e in &self.rows[i] {
                let b = self.stored(e.block);
                let yj = &ys[e.col * d * c..(e.col + 1) * d * c];
                for r in 0..d {
                    let orow = &mut acc[r * c..(r + 1) * c];
                    for k in 0..d {
                        let coef = if e.transpose { b[k * d + r] } else { b[r * d + k] };
                        if coef == 0.0 {
                            continue;
                        }
                        for (o, &v) in orow.iter_mut().zip(&yj[k * c..(k + 1) * c]) {
                            *o += coef * v;
                        }
                    }
                }
            }
        });
        Ok(out)
    }

    /// Gershgorin bound on the spectral radius: the largest block-row sum of
    /// absolute entries.
    pub fn gershgorin_bound(&self) -> f64 {
        let d = self.d;
        (0..self.n)
            .flat_map(|i| (0..d).map(move |r| (i, r)))
            .map(|(i, r)| {
                let diag = if self.diagonal == Diagonal::Identity { 1.0 } else { 0.0 };
                diag + self.rows[i]
                    .iter()
                    .map(|e| {
                        let b = self.stored(e.block);
                        (0..d)
                            .map(|k| if e.transpose { b[k * d + r] } else { b[r * d + k] }.abs())
                            .sum::<f64>()
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// `C·Y` for a block column `Y`.
pub fn blockmatvec(c: &BlockSymMatrix, y: &BlockColumn) -> Result<BlockColumn> {
    if c.n() != y.n() || c.d() != y.d() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has n = {}, d = {}; block column has n = {}, d = {}",
            c.n(),
            c.d(),
            y.n(),
            y.d()
        )));
    }
    let out = c.apply(&y.to_mat())?;
    BlockColumn::from_mat(y.d(), out)
}

/// A symmetric linear operator on `R^dim`.
pub trait SymOperator: Sync {
    fn dim(&self) -> usize;

    /// Applies the operator to each column of a `dim×c` matrix.
    fn apply(&self, x: &Mat) -> Mat;

    /// A shift `s ≥ 0` such that the operator plus `s·I` is positive
    /// semidefinite.
    fn psd_shift(&self) -> f64;
}

impl SymOperator for BlockSymMatrix {
    fn dim(&self) -> usize {
        BlockSymMatrix::dim(self)
    }

    fn apply(&self, x: &Mat) -> Mat {
        BlockSymMatrix::apply(self, x).expect("operand conforms")
    }

    fn psd_shift(&self) -> f64 {
        self.gershgorin_bound()
    }
}

/// A dense symmetric matrix as an operator; mostly for testing.
impl SymOperator for Mat {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &Mat) -> Mat {
        self.matmul(x)
    }

    fn psd_shift(&self) -> f64 {
        self.max_abs_row_sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    pub max_iters: usize,
    /// Per-pair residual bound relative to the largest Ritz value magnitude.
    pub rel_tol: f64,
    /// Extra subspace columns beyond the requested count.
    pub oversample: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            rel_tol: 1e-8,
            oversample: 4,
            seed: 0x005e_ed0f_e16e,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpairs {
    /// Algebraically largest eigenvalues, descending.
    pub values: Vec<f64>,
    /// `dim×k` matrix with orthonormal columns.
    pub vectors: Mat,
    /// Largest residual `‖Av − λv‖₂` among the returned pairs.
    pub max_residual: f64,
    /// Gap between the k-th and (k+1)-th Ritz values; `None` when the
    /// subspace spans the whole space.
    pub gap: Option<f64>,
    pub iterations: usize,
}

/// Top-`k` eigenpairs by block power iteration with Rayleigh-Ritz on a
/// `k + oversample` subspace, shifted so the iteration targets the
/// algebraically largest eigenvalues.
pub fn top_eigenvectors<A: SymOperator + ?Sized>(
    op: &A,
    k: usize,
    opts: &EigenOptions,
) -> Result<Eigenpairs> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "requested {k} eigenpairs of a {n}-dimensional operator"
        )));
    }
    let m = (k + opts.oversample).min(n);
    let shift = op.psd_shift();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q = Mat::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
    orthonormalize_columns(&mut q);

    let mut last_residual = f64::INFINITY;
    for iter in 1..=opts.max_iters {
        let z = op.apply(&q);
        let h = q.tr_matmul(&z);
        let ritz = sym_eigen_jacobi(&h);
        q = q.matmul(&ritz.vectors);
        let z = z.matmul(&ritz.vectors);

        let scale = ritz.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut max_res = 0.0f64;
        for j in 0..k {
            let lam = ritz.values[j];
            let r: f64 = (0..n)
                .map(|i| {
                    let e = z[(i, j)] - lam * q[(i, j)];
                    e * e
                })
                .sum::<f64>()
                .sqrt();
            max_res = max_res.max(r);
        }
        last_residual = max_res;
        if max_res <= opts.rel_tol * scale || m == n {
            let vectors = Mat::from_fn(n, k, |i, j| q[(i, j)]);
            return Ok(Eigenpairs {
                values: ritz.values[..k].to_vec(),
                vectors,
                max_residual: max_res,
                gap: (m > k).then(|| ritz.values[k - 1] - ritz.values[k]),
                iterations: iter,
            });
        }

        // Next subspace from (A + sI)Q, reusing AQ.
        let mut y = z;
        for (yv, qv) in y.as_mut_slice().iter_mut().zip(q.as_slice()) {
            *yv += shift * qv;
        }
        orthonormalize_columns(&mut y);
        q = y;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iters,
        residual: last_residual,
    })
}

/// A (possibly nonsymmetric) linear map `R^cols → R^rows` with its transpose.
pub trait LinearMap: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &Mat) -> Mat;
    fn apply_transpose(&self, x: &Mat) -> Mat;
}

impl LinearMap for Mat {
    fn nrows(&self) -> usize {
        self.rows()
    }

    fn ncols(&self) -> usize {
        self.cols()
    }

    fn apply(&self, x: &Mat) -> Mat {
        self.matmul(x)
    }

    fn apply_transpose(&self, x: &Mat) -> Mat {
        self.tr_matmul(x)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NormOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            rel_tol: 1e-6,
            seed: 0x0b_0e_7a,
        }
    }
}

/// Largest singular value of a linear map.
///
/// Runs the power iteration on `AᵀA` in its Krylov (Lanczos) form with full
/// reorthogonalization, stopping once the top Ritz value of `AᵀA` changes by
/// less than `rel_tol` relative and its residual bound is below `rel_tol`
/// times the value.
pub fn operator_norm<A: LinearMap + ?Sized>(a: &A, opts: &NormOptions) -> Result<f64> {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v = Mat::from_fn(n, 1, |_, _| StandardNormal.sample(&mut rng));
    let norm = v.frobenius_norm();
    v = v.scale(1.0 / norm);

    let max_steps = opts.max_iters.min(n);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut prev_top = 0.0f64;

    for step in 0..max_steps {
        let vcol = v.as_slice().to_vec();
        let mut w = a.apply_transpose(&a.apply(&v)).into_vec();
        let alpha: f64 = w.iter().zip(&vcol).map(|(x, y)| x * y).sum();
        basis.push(vcol);
        alphas.push(alpha);
        // Full reorthogonalization, twice.
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in w.iter_mut().zip(b) {
                    *x -= p * y;
                }
            }
        }
        let beta = w.iter().map(|x| x * x).sum::<f64>().sqrt();

        let t = tridiagonal(&alphas, &betas);
        let eig = sym_eigen_jacobi(&t);
        let top = eig.values[0].max(0.0);
        let last = eig.vectors[(alphas.len() - 1, 0)].abs();
        let residual = beta * last;

        let invariant = beta <= 1e-14 * top.max(f64::MIN_POSITIVE);
        let settled = (top - prev_top).abs() <= opts.rel_tol * top && residual <= opts.rel_tol * top;
        if top == 0.0 && invariant {
            return Ok(0.0);
        }
        if invariant || (step > 0 && settled) || step + 1 == n {
            return Ok(top.sqrt());
        }
        prev_top = top;
        betas.push(beta);
        v = Mat::from_vec(n, 1, w.into_iter().map(|x| x / beta).collect());
    }
    Err(Error::NoConvergence {
        iterations: max_steps,
        residual: f64::NAN,
    })
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> Mat {
    let k = alphas.len();
    let mut t = Mat::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_sym(n: usize, d: usize, seed: u64) -> BlockSymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut upper = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if (i + j) % 3 != 0 {
                    upper.push(((i, j), Mat::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng))));
                }
            }
        }
        BlockSymMatrix::new(n, d, Diagonal::Identity, upper).unwrap()
    }

    #[test]
    fn identity_diagonal_matvec_is_identity() {
        let c = BlockSymMatrix::new(4, 3, Diagonal::Identity, Vec::new()).unwrap();
        let y = BlockColumn::from_vec(4, 3, (0..36).map(|x| x as f64).collect()).unwrap();
        assert_eq!(blockmatvec(&c, &y).unwrap(), y);
    }

    #[test]
    fn matvec_matches_dense() {
        let c = random_sym(5, 3, 1);
        let dense = c.to_dense();
        let y = Mat::from_fn(15, 3, |i, j| (i as f64 * 0.37 + j as f64).sin());
        let got = c.apply(&y).unwrap();
        assert!(got.sub(&dense.matmul(&y)).frobenius_norm() < 1e-12);
        assert!(dense.sub(&dense.transpose()).frobenius_norm() == 0.0);
    }

    #[test]
    fn rejects_bad_blocks() {
        let bad = BlockSymMatrix::new(3, 2, Diagonal::Zero, vec![((1, 1), Mat::identity(2))]);
        assert!(matches!(bad, Err(Error::InvalidEdge(1, 1))));
        let dup = BlockSymMatrix::new(
            3,
            2,
            Diagonal::Zero,
            vec![((0, 1), Mat::identity(2)), ((0, 1), Mat::identity(2))],
        );
        assert!(dup.is_err());
        let c = BlockSymMatrix::new(3, 2, Diagonal::Zero, Vec::new()).unwrap();
        assert!(blockmatvec(&c, &BlockColumn::zeros(2, 2)).is_err());
    }

    #[test]
    fn frobenius_counts_both_triangles() {
        let c = random_sym(4, 2, 9);
        assert!((c.frobenius_norm() - c.to_dense().frobenius_norm()).abs() < 1e-12);
    }

    #[test]
    fn eigen_on_identity_has_unit_values() {
        let c = BlockSymMatrix::new(5, 2, Diagonal::Identity, Vec::new()).unwrap();
        let e = top_eigenvectors(&c, 3, &EigenOptions::default()).unwrap();
        for v in &e.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(e.max_residual < 1e-12);
    }

    #[test]
    fn eigen_rejects_bad_counts() {
        let c = BlockSymMatrix::new(2, 2, Diagonal::Identity, Vec::new()).unwrap();
        assert!(top_eigenvectors(&c, 0, &EigenOptions::default()).is_err());
        assert!(top_eigenvectors(&c, 5, &EigenOptions::default()).is_err());
    }

    #[test]
    fn eigen_reports_non_convergence() {
        let c = random_sym(10, 3, 4);
        let opts = EigenOptions {
            max_iters: 1,
            ..EigenOptions::default()
        };
        assert!(matches!(
            top_eigenvectors(&c, 3, &opts),
            Err(Error::NoConvergence { iterations: 1, .. })
        ));
    }

    #[test]
    fn operator_norm_simple_cases() {
        assert_eq!(operator_norm(&Mat::zeros(4, 4), &NormOptions::default()).unwrap(), 0.0);
        let three = Mat::identity(5).scale(3.0);
        assert!((operator_norm(&three, &NormOptions::default()).unwrap() - 3.0).abs() < 1e-9);
        let rect = Mat::from_rows(&[[3.0, 0.0], [0.0, 4.0], [0.0, 0.0]]);
        assert!((operator_norm(&rect, &NormOptions::default()).unwrap() - 4.0).abs() < 1e-9);
    }
}
