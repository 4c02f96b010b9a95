use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),
    #[error("missing excitation grading")]
    MissingGrading,
    #[error("manifold cap {cap} below initial photon number {initial}")]
    CapTooSmall { cap: usize, initial: usize },
    #[error("manifold restriction retains no basis states")]
    EmptyBasis,
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("grid needs {required} bytes, budget is {budget}")]
    GridTooLarge { required: usize, budget: usize },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("pulses overlap: {0}")]
    Overlap(String),
    #[error("index {index} outside retained basis of size {size}")]
    IndexOutOfBasis { index: usize, size: usize },
    #[error("missing single-pulse point at t = {0}")]
    MissingSinglePulse(f64),
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("pulse area n_gamma must be nonzero")]
    ZeroArea,
    #[error("target unreachable: {0}")]
    Unreachable(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("malformed table: {0}")]
    Table(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
