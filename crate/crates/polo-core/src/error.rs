//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("position ({x:.3}, {y:.3}, {z:.3}) is outside the grid")]
    OutOfGrid { x: f64, y: f64, z: f64 },

    #[error("cell ({0}, {1}) is out of bounds")]
    CellOutOfBounds(i32, i32),

    #[error("configuration at ({0}, {1}) is not navigable")]
    NonNavigable(i32, i32),

    #[error("likelihood {0} is outside (0, 1)")]
    InvalidLikelihood(f64),

    #[error("grid dimensions mismatch: {0}")]
    DimsMismatch(String),

    #[error("no path from ({0}, {1}) to ({2}, {3})")]
    GoalUnreachable(i32, i32, i32, i32),

    #[error("no valid goal configuration")]
    Trapped,

    #[error("scene generation failed for seed {seed}: {reason}")]
    GenerationFailed { seed: u64, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("parse error in {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error("unknown policy '{0}'")]
    UnknownPolicy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Parse { what: what.into(), detail: detail.into() }
    }
}
