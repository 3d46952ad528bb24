use thiserror::Error;

use crate::williams::WilliamsRealization;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid error: {0}")]
    Grid(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// Non-finite iterate, quadrature that failed to reach its tolerance, etc.
    #[error("numeric error: {message}")]
    Numeric {
        message: String,
        /// Index of the offending step for path generators.
        step: Option<usize>,
        /// Best estimate and achieved absolute error for quadrature.
        estimate: Option<f64>,
        achieved_tol: Option<f64>,
    },

    /// The first passage to `rU` was not observed before the grid horizon.
    #[error("hitting level {:.6} not reached before horizon", .0.m)]
    Truncated(Box<WilliamsRealization>),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn numeric_step(message: impl Into<String>, step: usize) -> Self {
        Error::Numeric {
            message: message.into(),
            step: Some(step),
            estimate: None,
            achieved_tol: None,
        }
    }

    pub(crate) fn quadrature(message: impl Into<String>, estimate: f64, achieved: f64) -> Self {
        Error::Numeric {
            message: message.into(),
            step: None,
            estimate: Some(estimate),
            achieved_tol: Some(achieved),
        }
    }
}
