use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("input matrix has non-finite entries")]
    NonFinite,

    #[error("invalid group spec: {0}")]
    InvalidSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not an element of {group}: {reason}")]
    NotAMember { group: String, reason: String },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("measurement graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(usize, usize),

    #[error("missing observation for edge ({0}, {1})")]
    MissingObservation(usize, usize),

    #[error("observation ({0}, {1}) does not correspond to an edge")]
    UnexpectedObservation(usize, usize),

    #[error("ground truth is required for this operation")]
    GroundTruthRequired,

    #[error("no connected graph after {attempts} draws with n = {n}, p = {p}; use a larger observation rate")]
    GraphGeneration { attempts: usize, n: usize, p: f64 },

    #[error("noise model `{model}` requires {required}")]
    IncompatibleNoise {
        model: &'static str,
        required: &'static str,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
