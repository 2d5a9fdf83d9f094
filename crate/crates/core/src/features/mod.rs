//! Keypoint detectors and descriptors.

mod akaze;
mod asift;
mod exchange;
mod image;
mod phase;
mod rift2;
mod sift;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::GeoRaster;

pub use akaze::{detect_akaze, fed_step_sizes, mldb_bit_count, AkazeParams};
pub use asift::{
    asift_detect, asift_match, asift_match_features, simulate_affine_views, AffineView, AsiftFeatures, AsiftParams,
};
pub use exchange::{import_external_matches, read_matches, write_matches, ExternalMatches};
pub use image::{gaussian_kernel, FloatImage};
pub use phase::{phase_congruency, PcParams, PhaseCongruency};
pub use rift2::{detect_rift2, Rift2Params};
pub use sift::{detect_sift, sift_on_image, SiftParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyPoint {
    pub x: f64,
    pub y: f64,
    /// Detection scale σ in image pixels.
    pub scale: f64,
    /// Radians in `[0, 2π)`, measured from +x toward +y (image rows grow downward).
    pub orientation: f64,
    pub response: f64,
}

impl KeyPoint {
    pub fn at(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            scale: 1.0,
            orientation: 0.0,
            response: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorKind {
    FloatL2,
    BinaryHamming,
    Mim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Descriptor {
    /// Unit-norm float vector.
    Float(Vec<f32>),
    /// Packed bits, least significant bit first.
    Binary(Vec<u8>),
    /// Aligned orientation indices (1-based) on the sampling pattern, plus the
    /// L2-normalized cell histograms derived from them.
    Mim { indices: Vec<u8>, histogram: Vec<f32> },
}

impl Descriptor {
    /// Distance under the metric of the descriptor kind. Mixed kinds compare as infinite.
    pub fn distance(&self, other: &Descriptor) -> f32 {
        match (self, other) {
            (Descriptor::Float(a), Descriptor::Float(b)) => l2(a, b),
            (Descriptor::Binary(a), Descriptor::Binary(b)) => {
                a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum::<u32>() as f32
            }
            (Descriptor::Mim { histogram: a, .. }, Descriptor::Mim { histogram: b, .. }) => l2(a, b),
            _ => f32::INFINITY,
        }
    }
}

fn l2(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>().sqrt()
}

pub(crate) fn l2_normalize(v: &mut [f32]) {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorSet {
    pub kind: DescriptorKind,
    /// Element count for float and index descriptors, bit count for binary ones.
    pub dim: usize,
    pub rows: Vec<Descriptor>,
}

impl DescriptorSet {
    pub fn empty(kind: DescriptorKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Keypoints and their descriptors, row-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub keypoints: Vec<KeyPoint>,
    pub descriptors: DescriptorSet,
}

#[derive(Serialize)]
struct DumpRow<'a> {
    #[serde(flatten)]
    keypoint: &'a KeyPoint,
    descriptor: &'a Descriptor,
}

/// One JSON object per line: keypoint fields plus its descriptor.
pub fn write_keypoints_jsonl(mut out: impl Write, features: &Features) -> Result<()> {
    for (keypoint, descriptor) in features.keypoints.iter().zip(&features.descriptors.rows) {
        serde_json::to_writer(&mut out, &DumpRow { keypoint, descriptor })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub(crate) fn require_size(img: &GeoRaster, min: usize) -> Result<()> {
    img.require_u8()?;
    if img.width() < min || img.height() < min {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min,
        });
    }
    Ok(())
}

/// Sorts by descending response with a total tie-break on geometry, then truncates.
pub(crate) fn keep_strongest<T>(items: &mut Vec<(KeyPoint, T)>, cap: usize) {
    items.sort_by(|(a, _), (b, _)| {
        b.response
            .total_cmp(&a.response)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
            .then(a.scale.total_cmp(&b.scale))
            .then(a.orientation.total_cmp(&b.orientation))
    });
    items.truncate(cap);
}
