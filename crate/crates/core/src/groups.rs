//! The four supported subgroups of O(d), their projections, and the constant
//! ρ of the projection inequality.
//!
//! A projection maps any `d×d` matrix `X` to a maximizer of `⟨X, Q⟩` over the
//! group, i.e. a nearest group element in Frobenius norm:
//!
//! | group  | method                                             |
//! |--------|----------------------------------------------------|
//! | O(d)   | orthogonal Procrustes, `U Vᵀ` from an SVD of `X`   |
//! | SO(d)  | Kabsch, `U diag(1,…,1,det(U Vᵀ)) Vᵀ`               |
//! | P(d)   | exact linear assignment on `X`                     |
//! | Z_m    | closed-form angle rounding                         |

use std::f64::consts::PI;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::assignment::max_score_assignment;
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize_columns, svd_jacobi, Mat};

/// Tolerance used by membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroupKind {
    Orthogonal,
    SpecialOrthogonal,
    Permutation,
    Cyclic,
}

/// A concrete subgroup of O(d).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GroupSpecRepr", into = "GroupSpecRepr")]
pub struct GroupSpec {
    kind: GroupKind,
    d: usize,
    m: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct GroupSpecRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
}

impl TryFrom<GroupSpecRepr> for GroupSpec {
    type Error = Error;

    fn try_from(r: GroupSpecRepr) -> Result<Self> {
        let need_d = || {
            r.d.ok_or_else(|| Error::InvalidSpec(format!("group `{}` needs field `d`", r.kind)))
        };
        match r.kind.as_str() {
            "O" => GroupSpec::orthogonal(need_d()?),
            "SO" => GroupSpec::special_orthogonal(need_d()?),
            "P" => GroupSpec::permutation(need_d()?),
            "Z" => {
                if let Some(d) = r.d {
                    if d != 2 {
                        return Err(Error::InvalidSpec(format!("cyclic group requires d = 2, got {d}")));
                    }
                }
                let m = r
                    .m
                    .ok_or_else(|| Error::InvalidSpec("cyclic group needs field `m`".into()))?;
                GroupSpec::cyclic(m)
            }
            other => Err(Error::InvalidSpec(format!(
                "unknown group kind `{other}` (expected SO, O, P or Z)"
            ))),
        }
    }
}

impl From<GroupSpec> for GroupSpecRepr {
    fn from(s: GroupSpec) -> Self {
        let kind = match s.kind {
            GroupKind::Orthogonal => "O",
            GroupKind::SpecialOrthogonal => "SO",
            GroupKind::Permutation => "P",
            GroupKind::Cyclic => "Z",
        };
        GroupSpecRepr {
            kind: kind.to_string(),
            d: Some(s.d),
            m: s.m,
        }
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GroupKind::Orthogonal => write!(f, "O({})", self.d),
            GroupKind::SpecialOrthogonal => write!(f, "SO({})", self.d),
            GroupKind::Permutation => write!(f, "P({})", self.d),
            GroupKind::Cyclic => write!(f, "Z_{}", self.m.unwrap_or(1)),
        }
    }
}

impl GroupSpec {
    fn with_dim(kind: GroupKind, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidSpec("dimension d must be at least 1".into()));
        }
        Ok(Self { kind, d, m: None })
    }

    pub fn orthogonal(d: usize) -> Result<Self> {
        Self::with_dim(GroupKind::Orthogonal, d)
    }

    pub fn special_orthogonal(d: usize) -> Result<Self> {
        Self::with_dim(GroupKind::SpecialOrthogonal, d)
    }

    pub fn permutation(d: usize) -> Result<Self> {
        Self::with_dim(GroupKind::Permutation, d)
    }

    /// Z_m realized as planar rotations by multiples of 2π/m.
    pub fn cyclic(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidSpec("cyclic order m must be at least 1".into()));
        }
        Ok(Self {
            kind: GroupKind::Cyclic,
            d: 2,
            m: Some(m),
        })
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    /// Element dimension.
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Cyclic order, for Z_m only.
    pub fn order(&self) -> Option<usize> {
        self.m
    }

    /// Whether the group is finite (P(d) and Z_m).
    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, GroupKind::Permutation | GroupKind::Cyclic)
    }

    /// Constant ρ in `‖X − nΠ(X)‖_F ≤ ρ·Tr(nI − Π(X)ᵀX)`.
    pub fn rho(&self) -> f64 {
        match (self.kind, self.m) {
            (GroupKind::Cyclic, Some(m)) if m >= 3 => 1.0 / (PI / m as f64).sin(),
            _ => 1.0,
        }
    }

    /// Explains why `mat` is not a member, or returns `None` if it is.
    pub fn membership_violation(&self, mat: &Mat) -> Option<String> {
        if mat.shape() != (self.d, self.d) {
            return Some(format!("expected {0}x{0}, got {1}x{2}", self.d, mat.rows(), mat.cols()));
        }
        if !mat.is_finite() {
            return Some("non-finite entries".into());
        }
        let orth = mat.tr_matmul(mat).sub(&Mat::identity(self.d)).frobenius_norm();
        if orth > MEMBERSHIP_TOL {
            return Some(format!("‖QᵀQ − I‖_F = {orth:.3e}"));
        }
        match self.kind {
            GroupKind::Orthogonal => None,
            GroupKind::SpecialOrthogonal => {
                let det = mat.det();
                ((det - 1.0).abs() > MEMBERSHIP_TOL).then(|| format!("det = {det}"))
            }
            GroupKind::Permutation => mat
                .as_slice()
                .iter()
                .any(|&x| x != 0.0 && x != 1.0)
                .then(|| "entries must be exactly 0 or 1".into()),
            GroupKind::Cyclic => {
                let m = self.m.unwrap_or(1);
                let angle = mat[(1, 0)].atan2(mat[(0, 0)]);
                let k = (angle * m as f64 / (2.0 * PI)).round() as i64;
                let k = k.rem_euclid(m as i64) as usize;
                let err = mat.sub(&cyclic_element(k, m)).frobenius_norm();
                (err > MEMBERSHIP_TOL).then(|| format!("distance {err:.3e} to nearest Q_k"))
            }
        }
    }

    pub fn contains(&self, mat: &Mat) -> bool {
        self.membership_violation(mat).is_none()
    }

    /// Enumerates every element of a finite group; `None` for O(d) and SO(d).
    ///
    /// Intended for small instances (d! elements for P(d)).
    pub fn enumerate(&self) -> Option<Vec<GroupElement>> {
        match self.kind {
            GroupKind::Cyclic => {
                let m = self.m.unwrap_or(1);
                Some((0..m).map(|k| GroupElement(cyclic_element(k, m))).collect())
            }
            GroupKind::Permutation => {
                let mut out = Vec::new();
                let mut perm: Vec<usize> = (0..self.d).collect();
                permutations(&mut perm, 0, &mut |p| {
                    out.push(GroupElement(permutation_matrix(p)));
                });
                Some(out)
            }
            _ => None,
        }
    }
}

fn permutations(p: &mut Vec<usize>, start: usize, f: &mut impl FnMut(&[usize])) {
    if start == p.len() {
        f(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permutations(p, start + 1, f);
        p.swap(start, i);
    }
}

/// A `d×d` matrix known to belong to some [`GroupSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement(Mat);

impl GroupElement {
    /// Validates membership.
    pub fn new(spec: &GroupSpec, mat: Mat) -> Result<Self> {
        match spec.membership_violation(&mat) {
            None => Ok(Self(mat)),
            Some(reason) => Err(Error::NotAMember {
                group: spec.to_string(),
                reason,
            }),
        }
    }

    pub fn identity(spec: &GroupSpec) -> Self {
        Self(Mat::identity(spec.dim()))
    }

    pub(crate) fn from_mat_unchecked(mat: Mat) -> Self {
        Self(mat)
    }

    pub fn mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }
}

/// Result of a projection onto a group.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub element: GroupElement,
    /// Set when the maximizer is undefined by the closed form and a
    /// conventional element was returned (cyclic case with a zero rotation
    /// component).
    pub degenerate: bool,
}

/// Nearest element of `spec` to `x` in Frobenius norm.
pub fn project(spec: &GroupSpec, x: &Mat) -> Result<Projection> {
    if x.shape() != (spec.dim(), spec.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "{spec} expects a {0}x{0} matrix, got {1}x{2}",
            spec.dim(),
            x.rows(),
            x.cols()
        )));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(project_unchecked(spec, x))
}

/// Same as [`project`] for inputs already known to be finite and conformable.
pub(crate) fn project_unchecked(spec: &GroupSpec, x: &Mat) -> Projection {
    let plain = |element| Projection {
        element,
        degenerate: false,
    };
    match spec.kind {
        GroupKind::Orthogonal => plain(project_orthogonal(x)),
        GroupKind::SpecialOrthogonal => plain(project_special_orthogonal(x)),
        GroupKind::Permutation => plain(project_permutation(x)),
        GroupKind::Cyclic => {
            let c = project_cyclic(x, spec.m.unwrap_or(1));
            Projection {
                element: c.element,
                degenerate: c.degenerate,
            }
        }
    }
}

/// Orthogonal Procrustes: `U Vᵀ` for `X = U Σ Vᵀ`.
pub fn project_orthogonal(x: &Mat) -> GroupElement {
    let svd = svd_jacobi(x);
    GroupElement(svd.u.matmul(&svd.v.transpose()))
}

/// Kabsch: `U diag(1,…,1,det(U Vᵀ)) Vᵀ`.
pub fn project_special_orthogonal(x: &Mat) -> GroupElement {
    let svd = svd_jacobi(x);
    let mut u = svd.u;
    let uv = u.matmul(&svd.v.transpose());
    if uv.det() < 0.0 {
        // Flip the direction paired with the smallest singular value.
        let last = u.cols() - 1;
        u.negate_column(last);
        return GroupElement(u.matmul(&svd.v.transpose()));
    }
    GroupElement(uv)
}

/// Permutation matrix maximizing `⟨Q, X⟩`.
pub fn project_permutation(x: &Mat) -> GroupElement {
    GroupElement(permutation_matrix(&max_score_assignment(x)))
}

/// `P[i, perm[i]] = 1`.
pub fn permutation_matrix(perm: &[usize]) -> Mat {
    let d = perm.len();
    let mut q = Mat::zeros(d, d);
    for (i, &j) in perm.iter().enumerate() {
        q[(i, j)] = 1.0;
    }
    q
}

/// Rotation by `2πk/m`.
pub fn cyclic_element(k: usize, m: usize) -> Mat {
    let a = 2.0 * PI * (k % m) as f64 / m as f64;
    let (s, c) = a.sin_cos();
    Mat::from_rows(&[[c, -s], [s, c]])
}

#[derive(Clone, Debug, PartialEq)]
pub struct CyclicProjection {
    pub k: usize,
    pub element: GroupElement,
    pub degenerate: bool,
}

/// Closed-form projection onto Z_m.
///
/// With `a = x₁₁ + x₂₂` and `b = x₂₁ − x₁₂`, the angle `θ = arccos(b/√(a²+b²))`
/// (reflected to `2π − θ` when `a < 0`) is rounded to the index
/// `round(m/4 − mθ/2π)` when `θ ≤ π/2 + π/m` and `round(5m/4 − mθ/2π)`
/// otherwise, taken modulo `m`. When `a = b = 0` every element is equally
/// good; `Q_0` is returned and `degenerate` is set.
pub fn project_cyclic(x: &Mat, m: usize) -> CyclicProjection {
    assert!(m >= 1, "cyclic order must be positive");
    assert_eq!(x.shape(), (2, 2), "cyclic projection expects a 2x2 matrix");
    let a = x[(0, 0)] + x[(1, 1)];
    let b = x[(1, 0)] - x[(0, 1)];
    let r = a.hypot(b);
    if r == 0.0 {
        return CyclicProjection {
            k: 0,
            element: GroupElement(Mat::identity(2)),
            degenerate: true,
        };
    }
    let base = (b / r).clamp(-1.0, 1.0).acos();
    let theta = if a >= 0.0 { base } else { 2.0 * PI - base };
    let mf = m as f64;
    let raw = if theta <= PI / 2.0 + PI / mf {
        mf / 4.0 - mf * theta / (2.0 * PI)
    } else {
        5.0 * mf / 4.0 - mf * theta / (2.0 * PI)
    };
    let k = (raw.round() as i64).rem_euclid(m as i64) as usize;
    CyclicProjection {
        k,
        element: GroupElement(cyclic_element(k, m)),
        degenerate: false,
    }
}

/// ρ for a group.
pub fn rho(spec: &GroupSpec) -> f64 {
    spec.rho()
}

/// Draws a Haar-uniform element.
///
/// O(d)/SO(d) use Gram-Schmidt on a Gaussian matrix, which is the QR
/// factorization with a positive `R` diagonal; SO(d) then flips the first
/// column when the determinant is negative.
pub fn sample_uniform<R: Rng + ?Sized>(spec: &GroupSpec, rng: &mut R) -> GroupElement {
    let d = spec.dim();
    match spec.kind {
        GroupKind::Orthogonal | GroupKind::SpecialOrthogonal => {
            let mut g = Mat::from_fn(d, d, |_, _| rng.sample(StandardNormal));
            orthonormalize_columns(&mut g);
            if spec.kind == GroupKind::SpecialOrthogonal && g.det() < 0.0 {
                g.negate_column(0);
            }
            GroupElement(g)
        }
        GroupKind::Permutation => {
            let mut perm: Vec<usize> = (0..d).collect();
            perm.shuffle(rng);
            GroupElement(permutation_matrix(&perm))
        }
        GroupKind::Cyclic => {
            let m = spec.m.unwrap_or(1);
            GroupElement(cyclic_element(rng.gen_range(0..m), m))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &Mat, b: &Mat, tol: f64) -> bool {
        a.sub(b).frobenius_norm() <= tol
    }

    fn rotation2(deg: f64) -> Mat {
        let (s, c) = deg.to_radians().sin_cos();
        Mat::from_rows(&[[c, -s], [s, c]])
    }

    #[test]
    fn orthogonal_of_diagonal_is_identity() {
        let x = Mat::diag(&[2.0, 3.0]);
        let spec = GroupSpec::orthogonal(2).unwrap();
        let p = project(&spec, &x).unwrap();
        assert!(close(p.element.mat(), &Mat::identity(2), 1e-12));
    }

    #[test]
    fn permutation_two_by_two() {
        let spec = GroupSpec::permutation(2).unwrap();
        let x = Mat::from_rows(&[[0.1, 0.9], [0.8, 0.2]]);
        let swap = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(project(&spec, &x).unwrap().element.mat(), &swap);
        let y = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(project(&spec, &y).unwrap().element.mat(), &swap);
        assert_eq!(project_permutation(&Mat::identity(5)).mat(), &Mat::identity(5));
    }

    #[test]
    fn cyclic_examples() {
        let z4 = GroupSpec::cyclic(4).unwrap();
        let p = project(&z4, &rotation2(40.0)).unwrap();
        assert_eq!(p.element.mat(), &Mat::identity(2));
        assert!(!p.degenerate);

        for m in 1..=12 {
            let c = project_cyclic(&Mat::identity(2), m);
            assert_eq!(c.k, 0);
        }
        let z1 = GroupSpec::cyclic(1).unwrap();
        let x = Mat::from_rows(&[[-3.0, 0.2], [5.0, 1.0]]);
        assert_eq!(project(&z1, &x).unwrap().element.mat(), &Mat::identity(2));
    }

    #[test]
    fn cyclic_degenerate_input_is_flagged() {
        let reflection = Mat::from_rows(&[[1.0, 0.0], [0.0, -1.0]]);
        let c = project_cyclic(&reflection, 6);
        assert!(c.degenerate);
        assert_eq!(c.k, 0);
        let spec = GroupSpec::cyclic(6).unwrap();
        assert!(project(&spec, &Mat::zeros(2, 2)).unwrap().degenerate);
    }

    #[test]
    fn special_orthogonal_fixes_determinant() {
        let x = Mat::diag(&[1.0, -2.0]);
        let q = project_special_orthogonal(&x);
        assert!((q.mat().det() - 1.0).abs() < 1e-12);
        // The orthogonal projection of the same input is a reflection.
        assert!((project_orthogonal(&x).mat().det() + 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let so3 = GroupSpec::special_orthogonal(3).unwrap();
        let g = sample_uniform(&so3, &mut rng);
        assert!(close(project_special_orthogonal(g.mat()).mat(), g.mat(), 1e-12));
    }

    #[test]
    fn rho_values() {
        assert_eq!(GroupSpec::orthogonal(3).unwrap().rho(), 1.0);
        assert_eq!(GroupSpec::cyclic(2).unwrap().rho(), 1.0);
        assert_eq!(GroupSpec::cyclic(1).unwrap().rho(), 1.0);
        assert!((GroupSpec::cyclic(6).unwrap().rho() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn errors_on_bad_input() {
        let spec = GroupSpec::special_orthogonal(3).unwrap();
        assert!(matches!(project(&spec, &Mat::zeros(2, 2)), Err(Error::DimensionMismatch(_))));
        let mut x = Mat::identity(3);
        x[(0, 1)] = f64::NAN;
        assert!(matches!(project(&spec, &x), Err(Error::NonFinite)));
        assert!(GroupSpec::cyclic(0).is_err());
        assert!(GroupSpec::orthogonal(0).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let z = GroupSpec::cyclic(5).unwrap();
        let s = serde_json::to_string(&z).unwrap();
        assert_eq!(s, r#"{"kind":"Z","d":2,"m":5}"#);
        assert_eq!(serde_json::from_str::<GroupSpec>(&s).unwrap(), z);
        let so: GroupSpec = serde_json::from_str(r#"{"kind":"SO","d":3}"#).unwrap();
        assert_eq!(so, GroupSpec::special_orthogonal(3).unwrap());
        assert!(serde_json::from_str::<GroupSpec>(r#"{"kind":"Z","d":3,"m":4}"#).is_err());
        assert!(serde_json::from_str::<GroupSpec>(r#"{"kind":"Q","d":3}"#).is_err());
    }

    #[test]
    fn samples_are_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let specs = [
            GroupSpec::orthogonal(4).unwrap(),
            GroupSpec::special_orthogonal(3).unwrap(),
            GroupSpec::permutation(6).unwrap(),
            GroupSpec::cyclic(7).unwrap(),
        ];
        for spec in specs {
            for _ in 0..50 {
                let g = sample_uniform(&spec, &mut rng);
                assert!(spec.contains(g.mat()), "{spec}: {:?}", spec.membership_violation(g.mat()));
            }
        }
        let z1 = GroupSpec::cyclic(1).unwrap();
        assert_eq!(sample_uniform(&z1, &mut rng).mat(), &Mat::identity(2));
    }

    #[test]
    fn enumeration_sizes() {
        assert_eq!(GroupSpec::permutation(4).unwrap().enumerate().unwrap().len(), 24);
        assert_eq!(GroupSpec::cyclic(9).unwrap().enumerate().unwrap().len(), 9);
        assert!(GroupSpec::orthogonal(2).unwrap().enumerate().is_none());
    }
}
