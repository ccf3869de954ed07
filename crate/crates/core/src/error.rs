use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A Kendall's tau or parameter value the requested family/rotation cannot attain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{context} did not converge after {iterations} iterations (last residual {residual:e})")]
    Numerical {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("expectile iteration did not converge after {iterations} iterations; last coefficients {last:?}")]
    ExpectileNotConverged { iterations: usize, last: Vec<f64> },

    #[error("rank-deficient design: linearly dependent column(s) {0:?}")]
    RankDeficient(Vec<String>),

    #[error("line {line}, column `{column}`: {message}")]
    Parse {
        line: u64,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
