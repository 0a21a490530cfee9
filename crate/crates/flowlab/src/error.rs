use thiserror::Error;

/// Errors shared by the whole crate.
#[derive(Debug, Error)]
pub enum FlowError {
    /// An argument violated a precondition (non-positive step, empty list, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A query left the range covered by a path or grid.
    #[error("out of range: {0}")]
    Range(String),

    /// A function left its admissible domain (f <= 0, path exits the interval, ...).
    #[error("domain violation: {0}")]
    Domain(String),

    /// A hitting or inverse-local-time target was not reached within the
    /// simulated horizon; the caller should extend the simulation.
    #[error("horizon exhausted: {0}")]
    Horizon(String),

    /// An estimator could not be formed from the available data.
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// A numerical routine failed to converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FlowError>;
