use thiserror::Error;

/// Errors surfaced by the sampling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is empty after removing zero rows")]
    EmptyMatrix,

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("eigendecomposition did not converge (residual {residual:.3e})")]
    EighNonConvergence { residual: f64 },

    #[error("selected eigenvalue {value:.3e} at index {index} is below tolerance")]
    DegenerateDirection { index: usize, value: f64 },

    #[error("residual row norms collapsed after {picked} of {wanted} picks")]
    RankCollapse { picked: usize, wanted: usize },

    #[error("matrix is rank deficient: {msg}")]
    RankDeficient { msg: String },

    #[error("sketch stayed rank deficient after {attempts} attempts")]
    SketchRankDeficient { attempts: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("target expected size {target} is unreachable (at most {max_reachable} positive directions)")]
    TargetUnreachable { target: f64, max_reachable: usize },

    #[error("state is corrupt: {0}")]
    CorruptState(String),

    #[error("acceptance log-probability {value:.3e} exceeds the proven bound")]
    AcceptanceBoundViolated { value: f64 },

    #[error(
        "rejection loop exceeded {max_outer} iterations \
         (s_tilde {s_tilde:.3e}, q {q}, mean proposal length {mean_k:.2})"
    )]
    MaxOuterExceeded { max_outer: usize, s_tilde: f64, q: u64, mean_k: f64 },

    #[error("instance too large for brute force: n = {n} exceeds limit {limit}")]
    BruteForceTooLarge { n: usize, limit: usize },

    #[error("sequence enumeration too large: {terms} terms exceed limit {limit}")]
    EnumerationTooLarge { terms: u128, limit: u128 },
}

pub type Result<T> = std::result::Result<T, Error>;
