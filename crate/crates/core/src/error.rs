use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid unit cell {rows}x{cols}: {reason}")]
    InvalidCell {
        rows: usize,
        cols: usize,
        reason: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite state at t = {t}; last finite state {last_state:?}; {context}")]
    NonFinite {
        t: f64,
        last_state: Vec<f64>,
        context: String,
    },

    #[error("adaptive step underflow at t = {t}: step {step:e} below minimum {min:e}")]
    StepUnderflow { t: f64, step: f64, min: f64 },

    #[error("singular matrix (pivot {pivot:e} in column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("newton failed after {iterations} iterations (residual {residual:e}): {reason}")]
    NewtonFailed {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("eigenvalue iteration did not converge for a {dim}x{dim} matrix")]
    EigenNoConvergence { dim: usize },

    #[error("trajectory too short: {0}")]
    TooShort(String),

    #[error("continuation failed: {0}")]
    Continuation(String),

    #[error("no sign change of {indicator} in [{lo}, {hi}]")]
    NoSignChange { indicator: String, lo: f64, hi: f64 },

    #[error("bifurcation indicators disagree: existence bracket [{exist_lo}, {exist_hi}], stability bracket [{stab_lo}, {stab_hi}]")]
    IndicatorsDisagree {
        exist_lo: f64,
        exist_hi: f64,
        stab_lo: f64,
        stab_hi: f64,
    },

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
