//! Radiation-insensitive keypoints: FAST-style corners on the phase-congruency
//! edge map, described by maximum-index-map histograms on a log-polar grid.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::phase::{compute, PcParams, PhaseCongruency};
use super::{keep_strongest, l2_normalize, require_size, Descriptor, DescriptorKind, DescriptorSet, KeyPoint};
use crate::error::{invalid_param, Result};
use crate::raster::GeoRaster;

const SAMPLE_STEP: isize = 2;
const FAST_ARC: usize = 9;
/// Bresenham circle of radius 3.
const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rift2Params {
    pub pc: PcParams,
    pub max_keypoints: usize,
    pub patch_radius: usize,
    pub descriptor_rings: usize,
    pub descriptor_sectors: usize,
    /// Minimum segment-test contrast on the normalized edge map.
    pub fast_threshold: f64,
    /// Rotate the sampling grid with the dominant orientation as well as
    /// shifting the indices.
    pub rotate_grid: bool,
}

impl Default for Rift2Params {
    fn default() -> Self {
        Self {
            pc: PcParams::default(),
            max_keypoints: 5000,
            patch_radius: 48,
            descriptor_rings: 3,
            descriptor_sectors: 8,
            fast_threshold: 1e-4,
            rotate_grid: false,
        }
    }
}

impl Rift2Params {
    pub fn validate(&self) -> Result<()> {
        self.pc.validate()?;
        if self.patch_radius < 4 {
            return Err(invalid_param("patch_radius", "must be at least 4"));
        }
        if self.descriptor_rings == 0 || self.descriptor_sectors == 0 {
            return Err(invalid_param("descriptor_rings", "rings and sectors must be positive"));
        }
        if !(self.fast_threshold >= 0.0) {
            return Err(invalid_param("fast_threshold", "must be non-negative"));
        }
        Ok(())
    }

    fn cells(&self) -> usize {
        self.descriptor_rings * self.descriptor_sectors
    }
}

/// Sampling lattice offsets with their log-polar cell.
fn pattern(p: &Rift2Params) -> Vec<(isize, isize, usize)> {
    let r = p.patch_radius as isize;
    let rf = p.patch_radius as f64;
    let bounds: Vec<f64> = (0..p.descriptor_rings)
        .map(|k| rf / 2f64.powi((p.descriptor_rings - 1 - k) as i32))
        .collect();
    let mut out = Vec::new();
    let start = -(r / SAMPLE_STEP) * SAMPLE_STEP;
    let mut dy = start;
    while dy <= r {
        let mut dx = start;
        while dx <= r {
            let d = ((dx * dx + dy * dy) as f64).sqrt();
            if d <= rf {
                let ring = bounds.iter().position(|b| d <= *b).unwrap_or(p.descriptor_rings - 1);
                let angle = (dy as f64).atan2(dx as f64).rem_euclid(2.0 * PI);
                let sector =
                    ((angle / (2.0 * PI) * p.descriptor_sectors as f64) as usize).min(p.descriptor_sectors - 1);
                out.push((dx, dy, ring * p.descriptor_sectors + sector));
            }
            dx += SAMPLE_STEP;
        }
        dy += SAMPLE_STEP;
    }
    out
}

/// Largest `t` for which at least nine contiguous circle samples are all
/// brighter than `c + t` or all darker than `c - t`.
fn fast_score(map: &[f32], w: usize, x: usize, y: usize) -> f32 {
    let c = map[y * w + x];
    let ring: Vec<f32> = CIRCLE
        .iter()
        .map(|(dx, dy)| map[(y as isize + dy) as usize * w + (x as isize + dx) as usize] - c)
        .collect();
    let mut best = 0.0f32;
    for start in 0..16 {
        let (mut lo, mut hi) = (f32::MAX, f32::MAX);
        for k in 0..FAST_ARC {
            let d = ring[(start + k) % 16];
            lo = lo.min(-d);
            hi = hi.min(d);
        }
        best = best.max(lo).max(hi);
    }
    best
}

fn keypoints(pc: &PhaseCongruency, p: &Rift2Params) -> Vec<(KeyPoint, u8)> {
    let (w, h) = (pc.width, pc.height);
    let max = pc.max_moment.iter().cloned().fold(0.0f32, f32::max);
    if max <= 0.0 || w < 9 || h < 9 {
        return Vec::new();
    }
    let edge: Vec<f32> = pc.max_moment.iter().map(|v| v / max).collect();
    let t = p.fast_threshold as f32;
    let border = 4;
    let scores: Vec<Vec<f32>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    if x < border || y < border || x >= w - border || y >= h - border {
                        0.0
                    } else {
                        let s = fast_score(&edge, w, x, y);
                        if s > t {
                            s
                        } else {
                            0.0
                        }
                    }
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for y in border..h - border {
        for x in border..w - border {
            let s = scores[y][x];
            if s <= 0.0 {
                continue;
            }
            // 3x3 suppression; equal scores keep the first in raster order.
            let mut keep = true;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = scores[(y as isize + dy) as usize][(x as isize + dx) as usize];
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if n > s || (n == s && earlier) {
                        keep = false;
                    }
                }
            }
            if keep {
                out.push((
                    KeyPoint {
                        x: x as f64,
                        y: y as f64,
                        scale: p.pc.min_wavelength,
                        orientation: 0.0,
                        response: s as f64,
                    },
                    0u8,
                ));
            }
        }
    }
    keep_strongest(&mut out, p.max_keypoints);
    out
}

fn describe(
    pc: &PhaseCongruency,
    kp: &KeyPoint,
    pattern: &[(isize, isize, usize)],
    p: &Rift2Params,
) -> (f64, Vec<u8>, Vec<f32>) {
    let n = p.pc.n_orientations;
    let (w, h) = (pc.width as isize, pc.height as isize);
    let (cx, cy) = (kp.x.round() as isize, kp.y.round() as isize);
    let at = |x: isize, y: isize| pc.mim[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];

    let mut counts = vec![0usize; n + 1];
    for &(dx, dy, _) in pattern {
        counts[at(cx + dx, cy + dy) as usize] += 1;
    }
    // Mode of the local index distribution; ties go to the lowest index.
    let dominant = (1..=n).fold(1, |best, i| if counts[i] > counts[best] { i } else { best });
    let theta = (dominant - 1) as f64 * PI / n as f64;
    let (co, si) = (theta.cos(), theta.sin());

    let mut indices = Vec::with_capacity(pattern.len());
    let mut hist = vec![0.0f32; p.cells() * n];
    for &(dx, dy, cell) in pattern {
        let (sx, sy) = if p.rotate_grid {
            let (fx, fy) = (dx as f64, dy as f64);
            (
                (fx * co - fy * si).round() as isize,
                (fx * si + fy * co).round() as isize,
            )
        } else {
            (dx, dy)
        };
        let raw = at(cx + sx, cy + sy) as usize;
        let aligned = (raw + n - dominant) % n + 1;
        indices.push(aligned as u8);
        hist[cell * n + aligned - 1] += 1.0;
    }
    l2_normalize(&mut hist);
    (theta, indices, hist)
}

pub fn detect_rift2(img: &GeoRaster, params: &Rift2Params) -> Result<(Vec<KeyPoint>, DescriptorSet)> {
    require_size(img, 16)?;
    params.validate()?;
    let data: Vec<f64> = img.band(0).iter().map(|v| *v as f64).collect();
    let pc = compute(&data, img.width(), img.height(), &params.pc);
    let pattern = pattern(params);
    let kps = keypoints(&pc, params);
    let described: Vec<(KeyPoint, Descriptor)> = kps
        .par_iter()
        .map(|(kp, _)| {
            let (theta, indices, histogram) = describe(&pc, kp, &pattern, params);
            (
                KeyPoint {
                    orientation: theta,
                    ..*kp
                },
                Descriptor::Mim { indices, histogram },
            )
        })
        .collect();
    let (keypoints, rows) = described.into_iter().unzip();
    Ok((
        keypoints,
        DescriptorSet {
            kind: DescriptorKind::Mim,
            dim: pattern.len(),
            rows,
        },
    ))
}
