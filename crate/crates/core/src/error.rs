use thiserror::Error;

/// Failure modes shared by every stage of the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("value {value} outside valid range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },
    #[error("ambiguous correspondence for reference marker {slot} in frame {frame}")]
    AmbiguousCorrespondence { frame: usize, slot: usize },
    #[error("tool definition failed: {reason} (residual {residual_mm} mm)")]
    DefinitionFailed { reason: String, residual_mm: f64 },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("no transform path: missing edge {from} -> {to}")]
    PathNotFound { from: String, to: String },
    #[error("pivot calibration is degenerate: {0}")]
    DegeneratePivot(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for the geometric failure family (maps to its own CLI exit code).
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateGeometry(_) | Error::DegenerateFit(_) | Error::DegeneratePivot(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
