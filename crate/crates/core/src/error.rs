use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("integer overflow while {0}")]
    Overflow(&'static str),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("negative Lagrange multiplier {value} at position {index}")]
    NegativeMultiplier { index: usize, value: f64 },

    #[error("oracle capacity exceeded: {n} variables, exact backend supports at most {max}")]
    OracleCapacity { n: usize, max: usize },

    #[error("starting point is infeasible")]
    InfeasibleStart,

    #[error("empty candidate list")]
    EmptyCandidates,

    #[error("empty solution pool")]
    EmptyPool,

    #[error("QAL is undefined for zero oracle queries")]
    ZeroQueries,

    #[error("invalid linear program: {0}")]
    InvalidLp(String),

    #[error("solution count exceeds 64-bit range")]
    CountOverflow,

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("cut set must be nonempty")]
    EmptyCutSet,

    #[error("malformed benchmark data: {0}")]
    BadTable(String),

    #[error("strategies disagree on instance {instance} of size {size}")]
    Disagreement { size: usize, instance: usize },

    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
