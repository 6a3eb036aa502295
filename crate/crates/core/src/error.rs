use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lag {lag} for a series of length {n}")]
    InvalidLag { lag: usize, n: usize },

    #[error("singular local linear fit at lag {lag:?}, t = {t:.6}")]
    SingularFit { lag: Option<usize>, t: f64 },

    #[error("empty evaluation grid for lag {lag} (bandwidth {bandwidth}, n = {n})")]
    EmptyGrid { lag: usize, bandwidth: f64, n: usize },

    #[error("non-positive local variance estimate {value} at grid index {index}")]
    NonPositiveVariance { index: usize, value: f64 },

    #[error("series too short: {n} observations, need at least {min}")]
    TooShort { n: usize, min: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for configuration problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::EmptyGrid { .. } | Error::InvalidLag { .. } => 2,
            _ => 3,
        }
    }
}
