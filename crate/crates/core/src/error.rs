use thiserror::Error;

/// Errors produced by basis construction, design assembly, fitting and I/O.
#[derive(Error, Debug)]
pub enum SflrError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {t} lies outside the basis domain [{start}, {end}]")]
    OutOfDomain { t: f64, start: f64, end: f64 },

    #[error("derivative order {order} exceeds spline degree {degree}")]
    DerivativeOrder { order: usize, degree: usize },

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("singular system (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("fit did not converge: {0}")]
    NotConverged(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SflrError>;
