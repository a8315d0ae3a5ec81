use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} values, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical instability at step {step}: {reason}")]
    Instability { step: usize, reason: String },

    #[error(
        "fixed-point iteration failed to converge after {iterations} iterations \
         (last residual {residual:e}); split the horizon into shorter windows"
    )]
    ContractionFailure {
        iterations: usize,
        residual: f64,
        ratios: Vec<f64>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Instability { .. } | Error::ContractionFailure { .. }
        )
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
