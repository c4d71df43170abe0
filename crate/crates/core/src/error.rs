//! Error type shared across the simulator, DSP chain, positioner, and dataset
//! container.

use thiserror::Error;

/// Unified error type for the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (bad β, zero bandwidth, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Geometry violation (touch point outside the display, grid overflow, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A scatterer lies beyond the unambiguous range of the waveform.
    #[error("scatterer at {range_cm:.2} cm exceeds the unambiguous range {limit_cm:.2} cm")]
    UnambiguousRange { range_cm: f64, limit_cm: f64 },

    /// Tensor or frame shape does not match the configuration.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A pipeline stage was invoked before the artifacts it needs exist.
    #[error("missing dependency: {0}")]
    MissingDependency(String),

    /// Too few sensors produced valid ranges to solve for a position.
    #[error("positioning unavailable: {valid} of {required} required sensors valid")]
    PositioningUnavailable { valid: usize, required: usize },

    /// A sensor had no valid range observations during calibration.
    #[error("calibration failed: sensor {sensor} has no valid range observations")]
    CalibrationFailure { sensor: usize },

    /// Persisted artifact is corrupt (checksum, version, or truncation).
    #[error("corrupt artifact: {0}")]
    Corrupt(String),

    /// Training diverged or produced non-finite loss.
    #[error("training error: {0}")]
    Train(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
