use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid rate at n = {index}: {value} (rates must be positive for n >= 1 and c(0) = 0)")]
    InvalidRate { index: usize, value: f64 },

    #[error("rate table tabulated up to {tabulated}, but {needed} entries are required")]
    InsufficientTabulation { tabulated: usize, needed: usize },

    #[error("rate table must be extended: {0}")]
    ExtendTable(String),

    #[error("sector too large: {count} configurations exceed the cap of {cap}")]
    SectorTooLarge { count: u128, cap: u128 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("support of the distribution is disconnected at n = {0}")]
    DisconnectedSupport(usize),

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("truncation insufficient: {0}")]
    ExtendCut(String),

    #[error("problem too large for the optimizer: {size} states (cap {cap})")]
    TooLarge { size: usize, cap: usize },

    #[error("no dynamics: {0}")]
    NoDynamics(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
