use thiserror::Error;

/// Errors raised by the library.
///
/// Variants are grouped by the subsystem that produces them so callers (and
/// the CLI) can tell user-input problems apart from numerical failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("degenerate rotation: {0}")]
    DegenerateRotation(String),

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("non-positive depth {0}")]
    NonPositiveDepth(f64),

    #[error("zero-length direction")]
    ZeroDirection,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no object points")]
    NoObjectPoints,

    #[error("all points were classified as noise")]
    AllNoise,

    #[error("degenerate point set: {0}")]
    DegeneratePoints(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("schema violation in {record}: {reason}")]
    Schema { record: String, reason: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("scene placement failed after {0} rejections")]
    PlacementFailed(usize),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
