use thiserror::Error;

/// Errors produced by the geometry, construction and solver routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed mesh at face {face}: {reason}")]
    Structural { face: usize, reason: String },

    #[error("non-finite coordinate at vertex {0}")]
    NonFinite(usize),

    #[error("zero-length edge between vertices {0} and {1}")]
    ZeroLengthEdge(usize, usize),

    #[error("mesh is not closed ({0} boundary edges)")]
    NotClosed(usize),

    #[error("inconsistent orientation on edge ({0}, {1})")]
    InconsistentOrientation(usize, usize),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("quadrilateral is not symmetric: {0}")]
    NotSymmetric(String),

    #[error("construction gives a double cover of the input (cap is already symmetric)")]
    DoubleCover,

    #[error("topology error: {0}")]
    Topology(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("boundary length mismatch: {0}")]
    LengthMismatch(String),

    #[error("newton did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("underdetermined flex problem: jacobian rank {rank} < {unknowns} unknowns")]
    Underdetermined { rank: usize, unknowns: usize },

    #[error("trace failed: {0}")]
    TraceFailed(String),

    #[error("search failed: {0}")]
    SearchFailed(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors raised by the numerical solver rather than by input validation.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Underdetermined { .. }
                | Error::TraceFailed(_)
                | Error::SearchFailed(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
