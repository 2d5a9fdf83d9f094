//! Affine view simulation and matching across simulated view pairs.

use std::collections::HashMap;

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sift::SIFT_DIM;
use super::{require_size, sift_on_image, DescriptorKind, DescriptorSet, Features, FloatImage, KeyPoint, SiftParams};
use crate::error::{invalid_param, Result};
use crate::matching::{match_descriptors, sort_matches, Match, MatchSet, DEFAULT_FLOAT_RATIO};
use crate::raster::{GeoRaster, SampleDepth};

/// Largest tilt exponent: tilts are `√2^k` for `k ≤ 5`.
pub const MAX_TILT_LEVELS: usize = 6;
const ROTATION_STEP_DEG: f64 = 72.0;

/// A simulated view: tilt `t`, rotation `phi` (radians), and the affine map
/// from view coordinates back to original image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineView {
    pub tilt: f64,
    pub phi: f64,
    /// `[[a, b, c], [d, e, f]]`: `x = a u + b v + c`, `y = d u + e v + f`.
    pub a: [[f64; 3]; 2],
}

impl AffineView {
    pub fn identity() -> Self {
        Self {
            tilt: 1.0,
            phi: 0.0,
            a: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    /// View coordinates to original coordinates.
    pub fn to_original(&self, u: f64, v: f64) -> (f64, f64) {
        let a = &self.a;
        (a[0][0] * u + a[0][1] * v + a[0][2], a[1][0] * u + a[1][1] * v + a[1][2])
    }

    /// Original coordinates to view coordinates.
    pub fn to_view(&self, x: f64, y: f64) -> (f64, f64) {
        let a = &self.a;
        let m = Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1]);
        let inv = m.try_inverse().expect("affine views are invertible");
        let r = inv * Vector2::new(x - a[0][2], y - a[1][2]);
        (r[0], r[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsiftParams {
    pub tilt_levels: usize,
    pub sift: SiftParams,
    pub ratio: f64,
    pub cross_check: bool,
}

impl Default for AsiftParams {
    fn default() -> Self {
        Self {
            tilt_levels: 2,
            sift: SiftParams::default(),
            ratio: DEFAULT_FLOAT_RATIO,
            cross_check: false,
        }
    }
}

impl AsiftParams {
    pub fn validate(&self) -> Result<()> {
        validate_levels(self.tilt_levels)?;
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(invalid_param("ratio", "must lie in (0, 1]"));
        }
        self.sift.validate()
    }
}

/// Tilt and rotation pairs in generation order: `t = √2^k`, and for `t > 1`
/// rotations `φ = j · 72°/t` covering `[0°, 360°)`.
pub(crate) fn view_parameters(tilt_levels: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(1.0, 0.0)];
    for k in 1..tilt_levels {
        let t = std::f64::consts::SQRT_2.powi(k as i32);
        let step = ROTATION_STEP_DEG / t;
        let count = (360.0 / step).ceil() as usize;
        out.extend((0..count).map(|j| (t, (j as f64 * step).to_radians())));
    }
    out
}

fn simulate(img: &FloatImage, tilt: f64, phi: f64) -> (FloatImage, Vec<bool>, AffineView) {
    if tilt == 1.0 && phi == 0.0 {
        return (img.clone(), vec![true; img.data.len()], AffineView::identity());
    }
    let (c, s) = (phi.cos(), phi.sin());
    let (w, h) = (img.width as f64, img.height as f64);
    // Rotate about the origin, then shift so the rotated frame starts at 0.
    let corners = [(0.0, 0.0), (w - 1.0, 0.0), (0.0, h - 1.0), (w - 1.0, h - 1.0)];
    let rotated: Vec<(f64, f64)> = corners.iter().map(|(x, y)| (c * x - s * y, s * x + c * y)).collect();
    let min_x = rotated.iter().map(|p| p.0).fold(f64::MAX, f64::min).floor();
    let min_y = rotated.iter().map(|p| p.1).fold(f64::MAX, f64::min).floor();
    let max_x = rotated.iter().map(|p| p.0).fold(f64::MIN, f64::max).ceil();
    let max_y = rotated.iter().map(|p| p.1).fold(f64::MIN, f64::max).ceil();
    let (rw, rh) = ((max_x - min_x) as usize + 1, (max_y - min_y) as usize + 1);

    // Inverse rotation: q -> p = R^T (q + min).
    let back = |qx: f64, qy: f64| {
        let (x, y) = (qx + min_x, qy + min_y);
        (c * x + s * y, -s * x + c * y)
    };
    let inside = |x: f64, y: f64| x >= -0.5 && y >= -0.5 && x <= w - 0.5 && y <= h - 0.5;
    let rot_img = FloatImage::from_fn(rw, rh, |qx, qy| {
        let (x, y) = back(qx as f64, qy as f64);
        if inside(x, y) {
            img.sample(x as f32, y as f32)
        } else {
            0.0
        }
    });
    let blurred = if tilt > 1.0 {
        rot_img.gaussian_blur_x((0.8 * (tilt * tilt - 1.0).sqrt()) as f32)
    } else {
        rot_img
    };
    let vw = ((rw as f64 - 1.0) / tilt).floor() as usize + 1;
    let view = FloatImage::from_fn(vw, rh, |u, v| blurred.sample((u as f64 * tilt) as f32, v as f32));
    let mask = (0..vw * rh)
        .map(|i| {
            let (x, y) = back((i % vw) as f64 * tilt, (i / vw) as f64);
            inside(x, y)
        })
        .collect();
    // (u, v) -> q = (t u, v) -> p = R^T (q + min).
    let a = [
        [c * tilt, s, c * min_x + s * min_y],
        [-s * tilt, c, -s * min_x + c * min_y],
    ];
    (view, mask, AffineView { tilt, phi, a })
}

/// Simulated views of `img`: rotation, anti-aliasing blur along x, and
/// subsampling of x by the tilt. Pixels outside the rotated frame are masked.
pub fn simulate_affine_views(img: &GeoRaster, tilt_levels: usize) -> Result<Vec<(GeoRaster, AffineView)>> {
    validate_levels(tilt_levels)?;
    img.require_u8()?;
    let base = FloatImage {
        width: img.width(),
        height: img.height(),
        data: img.band(0).to_vec(),
    };
    view_parameters(tilt_levels)
        .into_par_iter()
        .map(|(t, phi)| {
            if t == 1.0 && phi == 0.0 {
                return Ok((img.clone(), AffineView::identity()));
            }
            let (view, mask, a) = simulate(&base, t, phi);
            let data: Vec<f32> = view.data.iter().map(|v| SampleDepth::U8.quantize(*v as f64)).collect();
            let raster = GeoRaster::new(view.width, view.height, SampleDepth::U8, vec![data])?.with_mask(mask, 0.0)?;
            Ok((raster, a))
        })
        .collect()
}

fn validate_levels(tilt_levels: usize) -> Result<()> {
    if tilt_levels == 0 || tilt_levels > MAX_TILT_LEVELS {
        return Err(invalid_param(
            "tilt_levels",
            format!("must lie in 1..={MAX_TILT_LEVELS}"),
        ));
    }
    Ok(())
}

struct ViewFeatures {
    keypoints: Vec<KeyPoint>,
    descriptors: DescriptorSet,
}

/// SIFT features of every simulated view, in original-image coordinates.
pub struct AsiftFeatures {
    views: Vec<ViewFeatures>,
}

impl AsiftFeatures {
    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    /// Keypoints summed over all views.
    pub fn keypoint_count(&self) -> usize {
        self.views.iter().map(|v| v.keypoints.len()).sum()
    }

    /// All views' keypoints and descriptors concatenated in view order.
    pub fn into_features(self) -> Features {
        let mut keypoints = Vec::new();
        let mut descriptors = DescriptorSet::empty(DescriptorKind::FloatL2, SIFT_DIM);
        for v in self.views {
            keypoints.extend(v.keypoints);
            descriptors.rows.extend(v.descriptors.rows);
        }
        Features { keypoints, descriptors }
    }
}

fn view_features(img: &FloatImage, tilt_levels: usize, sift: &SiftParams) -> Result<Vec<ViewFeatures>> {
    view_parameters(tilt_levels)
        .into_par_iter()
        .map(|(t, phi)| {
            let (view, mask, a) = simulate(img, t, phi);
            let (kps, desc) = sift_on_image(&view, sift)?;
            let mut keypoints = Vec::new();
            let mut rows = Vec::new();
            for (kp, row) in kps.into_iter().zip(desc.rows) {
                let (u, v) = (kp.x.round() as usize, kp.y.round() as usize);
                // Drop detections on the synthetic border of rotated views.
                if !mask[v.min(view.height - 1) * view.width + u.min(view.width - 1)] {
                    continue;
                }
                let (x, y) = a.to_original(kp.x, kp.y);
                if x < 0.0 || y < 0.0 || x >= img.width as f64 || y >= img.height as f64 {
                    continue;
                }
                keypoints.push(KeyPoint { x, y, ..kp });
                rows.push(row);
            }
            Ok(ViewFeatures {
                keypoints,
                descriptors: DescriptorSet { rows, ..desc },
            })
        })
        .collect()
}

/// SIFT matching over every pair of simulated views, with keypoints mapped
/// back to the original frames. A match is dropped when a match from another
/// view pair lies within 1 px on both sides and has a lower distance.
pub fn asift_match(a: &GeoRaster, b: &GeoRaster, params: &AsiftParams) -> Result<MatchSet> {
    let fa = asift_detect(a, params)?;
    let fb = asift_detect(b, params)?;
    asift_match_features(fa, fb, params)
}

/// Detection half of [`asift_match`].
pub fn asift_detect(img: &GeoRaster, params: &AsiftParams) -> Result<AsiftFeatures> {
    require_size(img, 32)?;
    params.validate()?;
    Ok(AsiftFeatures {
        views: view_features(&FloatImage::from_raster(img), params.tilt_levels, &params.sift)?,
    })
}

/// Matching half of [`asift_match`].
pub fn asift_match_features(fa: AsiftFeatures, fb: AsiftFeatures, params: &AsiftParams) -> Result<MatchSet> {
    let (fa, fb) = (fa.views, fb.views);

    let offsets = |f: &[ViewFeatures]| -> Vec<usize> {
        f.iter()
            .scan(0, |acc, v| {
                let o = *acc;
                *acc += v.keypoints.len();
                Some(o)
            })
            .collect()
    };
    let (off_a, off_b) = (offsets(&fa), offsets(&fb));
    let jobs: Vec<(usize, usize)> = (0..fa.len()).flat_map(|i| (0..fb.len()).map(move |j| (i, j))).collect();
    let per_pair: Vec<Vec<(Match, usize)>> = jobs
        .par_iter()
        .enumerate()
        .map(|(pair, &(i, j))| {
            let m = match_descriptors(&fa[i].descriptors, &fb[j].descriptors, params.ratio, params.cross_check)?;
            Ok(m.into_iter()
                .map(|m| {
                    (
                        Match {
                            index_a: m.index_a + off_a[i],
                            index_b: m.index_b + off_b[j],
                            distance: m.distance,
                        },
                        pair,
                    )
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let keypoints_a: Vec<KeyPoint> = fa.into_iter().flat_map(|v| v.keypoints).collect();
    let keypoints_b: Vec<KeyPoint> = fb.into_iter().flat_map(|v| v.keypoints).collect();
    let mut all: Vec<(Match, usize)> = per_pair.into_iter().flatten().collect();
    all.sort_by(|(x, px), (y, py)| {
        x.distance
            .total_cmp(&y.distance)
            .then(px.cmp(py))
            .then(x.index_a.cmp(&y.index_a))
            .then(x.index_b.cmp(&y.index_b))
    });

    // Greedy de-duplication in ascending distance, bucketed on a 1 px grid.
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut kept: Vec<(Match, usize)> = Vec::new();
    for (m, pair) in all {
        let (pa, pb) = (&keypoints_a[m.index_a], &keypoints_b[m.index_b]);
        let cell = (pa.x.floor() as i64, pa.y.floor() as i64);
        let duplicate = (-1..=1).any(|dy| {
            (-1..=1).any(|dx| {
                grid.get(&(cell.0 + dx, cell.1 + dy)).is_some_and(|ids| {
                    ids.iter().any(|&k| {
                        let (other, other_pair) = &kept[k];
                        let (qa, qb) = (&keypoints_a[other.index_a], &keypoints_b[other.index_b]);
                        *other_pair != pair
                            && (qa.x - pa.x).hypot(qa.y - pa.y) <= 1.0
                            && (qb.x - pb.x).hypot(qb.y - pb.y) <= 1.0
                    })
                })
            })
        });
        if !duplicate {
            grid.entry(cell).or_default().push(kept.len());
            kept.push((m, pair));
        }
    }
    let mut pairs: Vec<Match> = kept.into_iter().map(|(m, _)| m).collect();
    sort_matches(&mut pairs);
    MatchSet::new(keypoints_a, keypoints_b, pairs)
}
