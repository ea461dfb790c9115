use thiserror::Error;

/// Errors produced anywhere in the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("all {0} folds diverged")]
    AllFoldsDiverged(usize),

    #[error("AIC correction undefined: m = {m} must exceed P + 2 = {}", .p + 2)]
    CorrectionUndefined { m: usize, p: usize },

    #[error("degenerate fit: mse = {0}")]
    DegenerateFit(f64),

    #[error("division by zero: {0}")]
    DivideByZero(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error at row {row}, column {column}: {msg}")]
    Validation {
        row: usize,
        column: String,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
