//! Group synchronization over O(d), SO(d), the permutation matrices P(d) and
//! the cyclic rotation groups Z_m.
//!
//! Given noisy pairwise ratios `C_ij ≈ G*_i G*_jᵀ` on the edges of a
//! measurement graph, the crate estimates `G*` up to a global right factor.
//! The pipeline is a spectral estimator (top-`d` eigenvectors of the data
//! matrix, projected blockwise onto the group) refined by the generalized
//! power method `G^{t+1} = Πⁿ(C G^t)`.
//!
//! ```
//! use groupsync::gen::{generate_instance, GenerateConfig, GraphConfig, NoiseConfig};
//! use groupsync::groups::GroupSpec;
//! use groupsync::{analysis, solver};
//!
//! let inst = generate_instance(&GenerateConfig {
//!     spec: GroupSpec::special_orthogonal(3)?,
//!     graph: GraphConfig { n: 40, p: 0.5 },
//!     noise: NoiseConfig::AdditiveGaussian { sigma: 0.1 },
//!     seed: 7,
//! })?;
//! let g0 = solver::spectral_estimator(&inst, &Default::default())?.estimate;
//! let res = solver::gpm(&inst, &g0, &Default::default())?;
//! let eps = analysis::estimation_error(inst.spec(), &res.estimate, inst.ground_truth().unwrap())?;
//! assert!(eps.epsilon < 1.0);
//! # Ok::<(), groupsync::Error>(())
//! ```
//!
//! With the default `parallel` feature, block mat-vecs, blockwise projections,
//! observation generation and experiment trials run on the rayon pool.

pub mod analysis;
pub mod assignment;
pub mod blocklin;
pub mod checks;
pub mod error;
pub mod experiment;
pub mod gen;
pub mod groups;
pub mod linalg;
pub mod model;
pub mod par;
pub mod solver;

pub use error::{Error, Result};
