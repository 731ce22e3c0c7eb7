use thiserror::Error;

pub type Result<T> = std::result::Result<T, GbtError>;

#[derive(Debug, Error)]
pub enum GbtError {
    #[error("empty training matrix")]
    EmptyMatrix,

    #[error("matrix shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("target length {targets} does not match row count {rows}")]
    TargetLength { rows: usize, targets: usize },

    #[error("poisson loss requires non-negative targets (row {row} has {value})")]
    NegativeTarget { row: usize, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("hessian sum plus lambda must be positive, got {0}")]
    NonPositiveCurvature(f64),

    #[error("feature schema mismatch: model expects {expected:?}, rows carry {got:?}")]
    Schema {
        expected: Vec<String>,
        got: Vec<String>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("model document: {0}")]
    Format(String),
}
