use thiserror::Error;

#[derive(Debug, Error)]
pub enum KmtError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("index {index} outside window range [{lo}, {hi}]")]
    IndexOutOfRange { index: i64, lo: i64, hi: i64 },
    #[error("lag budget {lag} below process minimum {min}; tail bound at {lag} is {bound}")]
    LagBudgetTooSmall { lag: usize, min: usize, bound: f64 },
    #[error("requested lag {j} exceeds lag budget {lag}; treat as long-range / unmeasured")]
    LagBeyondBudget { j: usize, lag: usize },
    #[error("inadmissible schedule parameters: {0}")]
    InadmissibleSchedule(String),
    #[error("config error in key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, KmtError>;
