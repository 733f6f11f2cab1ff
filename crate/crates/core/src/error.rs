//! Error types shared across the pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed telemetry record.
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    /// Frame timestamps must be strictly increasing within a stream.
    #[error("sequence error at line {line}: t={t} does not increase over t={prev}")]
    Sequence { line: usize, t: f64, prev: f64 },

    /// A window has not accumulated enough samples yet.
    #[error("window not warm: {have} of {need} samples")]
    NotWarm { have: usize, need: usize },

    /// A signal left its physical envelope (NaN, inf, force bound, ...).
    #[error("signal quality: {0}")]
    SignalQuality(String),

    /// A file did not match its declared schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Calibration could not produce a usable profile.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// Bad runtime configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub fn calibration(msg: impl Into<String>) -> Self {
        Error::Calibration(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn signal(msg: impl Into<String>) -> Self {
        Error::SignalQuality(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
