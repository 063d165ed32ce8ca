use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("workload: {0}")]
    Workload(#[from] WorkloadError),
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("timing: {0}")]
    Timing(String),
    #[error("nonlinear: {0}")]
    Nonlinear(String),
    #[error("buffering: {0}")]
    Buffering(#[from] BufferingError),
    #[error("config: {0}")]
    Config(String),
    #[error("sweep: {0}")]
    Sweep(String),
    #[error("report: {0}")]
    Report(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("layer {layer} ({kind}): {reason}")]
    Validation {
        layer: usize,
        kind: String,
        reason: String,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not orthogonal (max |QᵀQ - I| = {deviation:e})")]
    NotOrthogonal { deviation: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid noise spec: {0}")]
    Noise(String),
    #[error("malformed phase program: {0}")]
    Program(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum BufferingError {
    #[error("empty memory trace")]
    EmptyTrace,
    #[error("bandwidth must be positive")]
    Bandwidth,
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("no feasible batch: {0}")]
    NoFeasibleBatch(String),
}

impl Error {
    /// Exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Workload(_) | Error::Config(_) | Error::Io { .. } | Error::Sweep(_) => 2,
            Error::Buffering(BufferingError::NoFeasibleBatch(_)) => 3,
            Error::Invariant(_) => 4,
            Error::Mesh(_) | Error::Buffering(_) | Error::Report(_) => 2,
            Error::Timing(_) | Error::Nonlinear(_) => 2,
        }
    }
}
