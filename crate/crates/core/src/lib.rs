//! Multimodal lunar image registration.
//!
//! The pipeline runs georeferencing and preprocessing ([`geo`], [`preprocess`]),
//! keypoint detection and description ([`features`]), robust homography
//! fitting ([`matching`]), warping and coordinate integration ([`geowarp`]),
//! and accuracy/timing evaluation on synthetic ground truth ([`eval`]).

pub mod error;
pub mod eval;
pub mod features;
pub mod geo;
pub mod geowarp;
pub mod io;
pub mod matching;
pub mod preprocess;
pub mod raster;

pub use error::{Error, Result};
pub use geo::{GeoMeta, Projection};
pub use raster::{GeoRaster, Kernel, SampleDepth};
