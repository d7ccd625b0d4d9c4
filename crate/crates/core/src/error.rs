use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user input: bad degrees, unsorted breakpoints, malformed configs.
    #[error("validation: {0}")]
    Validation(String),

    /// Geometry file or control-net problems: parse failures, interface
    /// mismatch, singular Jacobians.
    #[error("geometry: {0}")]
    Geometry(String),

    /// The two-patch parameterization admits no linear gluing functions; the
    /// payload is the smallest achievable sup-norm residual of the G1 identity.
    #[error("geometry is not analysis-suitable G1 (best residual {residual:.3e})")]
    NotAnalysisSuitable { residual: f64 },

    /// Numerical failure: singular collocation or stiffness matrix, solver
    /// breakdown, residual above tolerance.
    #[error("numerical: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
