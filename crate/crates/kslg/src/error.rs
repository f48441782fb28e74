//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Array shapes do not conform to the grid.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A field that must be strictly positive is not.
    #[error("positivity violated at t = {t}: {detail}")]
    Positivity { t: f64, detail: String },

    /// The time step rule could not produce a usable step.
    #[error("stability violated at t = {t}: {detail}")]
    Stability { t: f64, detail: String },

    /// A temporal test profile extends past the simulated horizon.
    #[error("test-function support error: {0}")]
    Support(String),

    /// Malformed experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Corrupt or unsupported snapshot file.
    #[error("snapshot format error: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, Error>;
