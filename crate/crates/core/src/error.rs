use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected RTD1, found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported tensor dtype {0}")]
    UnsupportedDtype(u8),
    #[error("dimension {0} exceeds 2^31")]
    DimensionOverflow(u64),
    #[error("truncated tensor payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate box: w={w}, h={h}")]
    DegenerateBox { w: f64, h: f64 },
    #[error("box {index} outside field of view: {reason}")]
    BoxOutOfView { index: usize, reason: String },
    #[error("scatterer {index} out of bounds: range={range} m, azimuth={azimuth} rad")]
    ScattererOutOfBounds {
        index: usize,
        range: f64,
        azimuth: f64,
    },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("frame id mismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: u64, found: u64 },
    #[error("no ground truth boxes; average precision is undefined")]
    NoGroundTruth,
    #[error("covariance not estimable: {0}")]
    Covariance(String),
    #[error("non-finite loss at step {step}")]
    Divergence { step: usize },
    #[error("unknown format {0:?}")]
    UnknownFormat(String),
    #[error("missing format {0:?}")]
    MissingFormat(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
