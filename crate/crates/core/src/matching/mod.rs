//! Descriptor correspondence search and robust homography estimation.
//!
//! Homographies map image A (source) coordinates to image B (reference)
//! coordinates: `b ≈ H · a`.

mod dlt;
mod homography;
mod ransac;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DescriptorKind, DescriptorSet, Features, KeyPoint};

pub use dlt::dlt_homography;
pub use homography::Homography;
pub use ransac::{ransac_homography, ransac_points, symmetric_transfer_error, RansacParams, RansacResult};

pub const DEFAULT_FLOAT_RATIO: f64 = 0.75;
pub const DEFAULT_BINARY_RATIO: f64 = 0.8;

/// Default ratio-test threshold for a descriptor kind.
pub fn default_ratio(kind: DescriptorKind) -> f64 {
    match kind {
        DescriptorKind::BinaryHamming => DEFAULT_BINARY_RATIO,
        DescriptorKind::FloatL2 | DescriptorKind::Mim => DEFAULT_FLOAT_RATIO,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    /// Descriptor distance, or a matcher-supplied score for external matches.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    pub keypoints_a: Vec<KeyPoint>,
    pub keypoints_b: Vec<KeyPoint>,
    pub pairs: Vec<Match>,
}

impl MatchSet {
    pub fn new(keypoints_a: Vec<KeyPoint>, keypoints_b: Vec<KeyPoint>, pairs: Vec<Match>) -> Result<Self> {
        if let Some(m) = pairs
            .iter()
            .find(|m| m.index_a >= keypoints_a.len() || m.index_b >= keypoints_b.len())
        {
            return Err(crate::error::invalid_param(
                "pairs",
                format!("match ({}, {}) indexes past the keypoint lists", m.index_a, m.index_b),
            ));
        }
        Ok(Self {
            keypoints_a,
            keypoints_b,
            pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Coordinates of the i-th pair: `((xa, ya), (xb, yb))`.
    pub fn points(&self, i: usize) -> ((f64, f64), (f64, f64)) {
        let m = &self.pairs[i];
        let (a, b) = (&self.keypoints_a[m.index_a], &self.keypoints_b[m.index_b]);
        ((a.x, a.y), (b.x, b.y))
    }

    pub fn point_pairs(&self) -> Vec<((f64, f64), (f64, f64))> {
        (0..self.len()).map(|i| self.points(i)).collect()
    }

    /// Pairs whose mask entry is true, keypoint lists unchanged.
    pub fn select(&self, mask: &[bool]) -> MatchSet {
        MatchSet {
            keypoints_a: self.keypoints_a.clone(),
            keypoints_b: self.keypoints_b.clone(),
            pairs: self
                .pairs
                .iter()
                .zip(mask)
                .filter(|(_, keep)| **keep)
                .map(|(m, _)| *m)
                .collect(),
        }
    }
}

/// Best and second-best candidates of `query` among `train` (ties to the lower index).
fn two_nearest(query: &crate::features::Descriptor, train: &DescriptorSet) -> Option<(usize, f32, Option<f32>)> {
    let mut best: Option<(usize, f32)> = None;
    let mut second: Option<f32> = None;
    for (j, row) in train.rows.iter().enumerate() {
        let d = query.distance(row);
        match best {
            None => best = Some((j, d)),
            Some((_, bd)) if d < bd => {
                second = Some(bd);
                best = Some((j, d));
            }
            Some(_) => {
                if second.is_none_or(|s| d < s) {
                    second = Some(d);
                }
            }
        }
    }
    best.map(|(j, d)| (j, d, second))
}

/// Nearest-neighbour matching of `a` against `b` with a ratio test
/// (`d1 / d2 < ratio`) and optional mutual-best cross-check. Output is sorted
/// by ascending distance.
pub fn match_descriptors(a: &DescriptorSet, b: &DescriptorSet, ratio: f64, cross_check: bool) -> Result<Vec<Match>> {
    if a.kind != b.kind {
        return Err(Error::DescriptorKindMismatch(a.kind, b.kind));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(crate::error::invalid_param("ratio", "must lie in (0, 1]"));
    }
    if a.is_empty() || b.is_empty() {
        return Ok(Vec::new());
    }
    let forward: Vec<Option<Match>> = a
        .rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let (j, d1, d2) = two_nearest(row, b)?;
            let passes = match d2 {
                None => true,
                Some(d2) if d2 > 0.0 => (d1 as f64) < ratio * d2 as f64,
                Some(_) => false,
            };
            passes.then_some(Match {
                index_a: i,
                index_b: j,
                distance: d1 as f64,
            })
        })
        .collect();
    let backward: Option<Vec<usize>> = cross_check.then(|| {
        b.rows
            .par_iter()
            .map(|row| two_nearest(row, a).map(|(i, _, _)| i).unwrap_or(usize::MAX))
            .collect()
    });
    let mut out: Vec<Match> = forward
        .into_iter()
        .flatten()
        .filter(|m| backward.as_ref().is_none_or(|back| back[m.index_b] == m.index_a))
        .collect();
    sort_matches(&mut out);
    Ok(out)
}

pub(crate) fn sort_matches(m: &mut [Match]) {
    m.sort_by(|x, y| {
        x.distance
            .total_cmp(&y.distance)
            .then(x.index_a.cmp(&y.index_a))
            .then(x.index_b.cmp(&y.index_b))
    });
}

pub fn match_features(a: &Features, b: &Features, ratio: f64, cross_check: bool) -> Result<MatchSet> {
    let pairs = match_descriptors(&a.descriptors, &b.descriptors, ratio, cross_check)?;
    MatchSet::new(a.keypoints.clone(), b.keypoints.clone(), pairs)
}
