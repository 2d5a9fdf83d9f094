use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the registration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("invalid geo metadata: {0}")]
    InvalidGeoMeta(String),
    #[error("geotransform is singular (determinant {0})")]
    SingularGeotransform(f64),
    #[error("raster carries no geo metadata")]
    MissingGeoMeta,
    #[error("unsupported projection pair: {0}")]
    UnsupportedProjectionPair(String),
    #[error("source ground sampling distance is unknown")]
    UnknownSourceGsd,
    #[error("no valid pixels in raster")]
    EmptyValidRegion,
    #[error("tile grid {tiles_x}x{tiles_y} is too fine for a {width}x{height} image")]
    TileGridTooFine {
        tiles_x: usize,
        tiles_y: usize,
        width: usize,
        height: usize,
    },
    #[error("operation requires 8-bit input")]
    NonEightBitInput,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("image too small: {width}x{height}, need at least {min} px per side")]
    ImageTooSmall { width: usize, height: usize, min: usize },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("coordinate out of bounds at line {line}")]
    CoordinateOutOfBounds { line: usize },
    #[error("descriptor kinds differ: {0:?} vs {1:?}")]
    DescriptorKindMismatch(crate::features::DescriptorKind, crate::features::DescriptorKind),
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("need at least 4 matches, got {0}")]
    InsufficientMatches(usize),
    #[error("no model with at least 4 inliers was found")]
    NoModelFound,
    #[error("homography is not invertible")]
    NonInvertibleHomography,
    #[error("control point set is empty")]
    EmptyPointSet,
    #[error("invalid configuration field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("cannot read {path}: {reason}")]
    InputUnreadable { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Re-labels a parameter error as a configuration error on `section.name`.
    pub fn into_config(self, section: &str) -> Error {
        match self {
            Error::InvalidParameter { name, reason } => Error::ConfigInvalid {
                field: if section.is_empty() {
                    name.to_string()
                } else {
                    format!("{section}.{name}")
                },
                reason,
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid_param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
