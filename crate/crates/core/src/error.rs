//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VoltError {
    #[error("invalid {field}: {message}")]
    InvalidSpec { field: &'static str, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty source: no sample point lies within radius {radius} of the center")]
    EmptySource { radius: f64 },

    #[error("ill-posed: no ground and no source path for {count} node(s); the voltage there is an arbitrary constant")]
    NoGroundNoSource { count: usize },

    #[error("graph is disconnected; {0} is only defined on connected graphs")]
    Disconnected(&'static str),

    #[error("undefined extension: query has zero kernel mass and lies outside the source region")]
    UndefinedExtension,

    #[error("graph carries no point coordinates; rebuild it from a point cloud")]
    MissingPoints,

    #[error("graph carries no kernel; rebuild it from a point cloud and kernel")]
    MissingKernel,

    #[error("{op}: size cap exceeded (n = {n} > {cap}); use the iterative solver")]
    SizeCap { op: &'static str, n: usize, cap: usize },

    #[error("right-hand side is not mean-zero (sum = {sum:.3e})")]
    NotMeanZero { sum: f64 },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    CgNoConvergence { iterations: usize, residual: f64 },

    #[error("linear solve failed: {0}")]
    SingularSystem(&'static str),

    #[error("landmark {index}: {source}")]
    Landmark {
        index: usize,
        #[source]
        source: Box<VoltError>,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),
}

impl VoltError {
    /// Validation errors are the caller's fault; numerical errors are the
    /// run's. The CLI maps these classes onto exit codes 1 and 2.
    pub fn is_validation(&self) -> bool {
        match self {
            VoltError::Landmark { source, .. } => source.is_validation(),
            VoltError::CgNoConvergence { .. }
            | VoltError::SingularSystem(_)
            | VoltError::NoGroundNoSource { .. }
            | VoltError::UndefinedExtension => false,
            _ => true,
        }
    }
}
