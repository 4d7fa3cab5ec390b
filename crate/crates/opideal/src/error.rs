use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("dual of an l_infty-sum is outside scope (bidual); tag the space c0 instead")]
    DualOfSupSum,

    #[error("no exact mode available for this domain/codomain pair")]
    UnsupportedExact,

    #[error("invalid exponent: {0}")]
    InvalidExponent(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("hypothesis not satisfied: {0}")]
    HypothesisFailed(String),

    #[error("linear program infeasible on row {row}: {detail}")]
    LpInfeasible { row: usize, detail: String },

    #[error("search budget exhausted: {0}")]
    BudgetExhausted(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
