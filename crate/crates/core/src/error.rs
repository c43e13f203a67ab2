use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum IvError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("identification failure: {0}")]
    Identification(String),

    #[error("infeasible moment system: residual {residual:.3e} after dropping dependent rows")]
    Infeasible { residual: f64 },

    #[error("singular design matrix; use a penalty lambda > 0")]
    SingularDesign,

    #[error("singular nuisance block in the score decomposition")]
    SingularNuisance,

    #[error("weighted normal matrix is not positive definite; redraw the weights")]
    Retry,

    #[error("bootstrap aborted: {retries} retries out of {requested} draws exceeds 1%")]
    RetryOverflow { retries: usize, requested: usize },

    #[error("statistic undefined: {0}")]
    Undefined(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
}

pub type Result<T> = std::result::Result<T, IvError>;
