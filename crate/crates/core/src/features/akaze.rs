//! Nonlinear-diffusion scale space with Hessian keypoints and M-LDB binary descriptors.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{keep_strongest, require_size, Descriptor, DescriptorKind, DescriptorSet, FloatImage, KeyPoint};
use crate::error::{invalid_param, Result};
use crate::raster::GeoRaster;

const BASE_SIGMA: f64 = 1.6;
const TAU_MAX: f64 = 0.25;
const PATTERN_SIZE: f64 = 10.0;
const GRIDS: [usize; 3] = [2, 3, 4];
const SAMPLES_PER_CELL_AXIS: usize = 4;
const MIN_OCTAVE_SIZE: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AkazeParams {
    pub octaves: usize,
    pub sublevels: usize,
    /// Minimum scale-normalized Hessian determinant, intensities on `[0, 1]`.
    pub detector_threshold: f64,
    /// Gradient-magnitude percentile (0..100) that sets the diffusion contrast `k`.
    pub diffusivity_contrast_percentile: f64,
    pub max_features: usize,
}

impl Default for AkazeParams {
    fn default() -> Self {
        Self {
            octaves: 4,
            sublevels: 4,
            detector_threshold: 0.001,
            diffusivity_contrast_percentile: 70.0,
            max_features: 5000,
        }
    }
}

impl AkazeParams {
    pub fn validate(&self) -> Result<()> {
        if self.octaves == 0 {
            return Err(invalid_param("octaves", "must be at least 1"));
        }
        if self.sublevels == 0 {
            return Err(invalid_param("sublevels", "must be at least 1"));
        }
        if !(self.detector_threshold >= 0.0) {
            return Err(invalid_param("detector_threshold", "must be non-negative"));
        }
        if !(self.diffusivity_contrast_percentile > 0.0 && self.diffusivity_contrast_percentile < 100.0) {
            return Err(invalid_param("diffusivity_contrast_percentile", "must lie in (0, 100)"));
        }
        Ok(())
    }
}

/// Number of M-LDB bits for the given grid sizes: every unordered pair of
/// cells compared on three channels.
pub fn mldb_bit_count(grids: &[usize]) -> usize {
    grids
        .iter()
        .map(|g| {
            let cells = g * g;
            3 * cells * (cells - 1) / 2
        })
        .sum()
}

/// Fast Explicit Diffusion step sizes for one cycle covering `total_time`.
pub fn fed_step_sizes(total_time: f64, tau_max: f64) -> Vec<f64> {
    if total_time <= 0.0 {
        return Vec::new();
    }
    let n = ((3.0 * total_time / tau_max + 0.25).sqrt() - 0.5).ceil().max(1.0) as usize;
    let scale = 3.0 * total_time / (tau_max * (n * n + n) as f64);
    let c = 1.0 / (4 * n + 2) as f64;
    let d = scale * tau_max / 2.0;
    (0..n)
        .map(|k| {
            let h = (PI * (2 * k + 1) as f64 * c).cos();
            d / (h * h)
        })
        .collect()
}

/// One explicit step of `∂L/∂t = div(c ∇L)` in flux form. Fluxes through
/// the image border are zero, so the image sum is conserved.
pub(crate) fn diffusion_step(l: &FloatImage, c: &FloatImage, tau: f64) -> FloatImage {
    let (w, h) = (l.width, l.height);
    let tau = tau as f32;
    let rows: Vec<Vec<f32>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let v = l.get(x, y);
                    let cv = c.get(x, y);
                    let mut flux = 0.0f32;
                    if x + 1 < w {
                        flux += (cv + c.get(x + 1, y)) * (l.get(x + 1, y) - v);
                    }
                    if x > 0 {
                        flux -= (c.get(x - 1, y) + cv) * (v - l.get(x - 1, y));
                    }
                    if y + 1 < h {
                        flux += (cv + c.get(x, y + 1)) * (l.get(x, y + 1) - v);
                    }
                    if y > 0 {
                        flux -= (c.get(x, y - 1) + cv) * (v - l.get(x, y - 1));
                    }
                    v + tau * 0.5 * flux
                })
                .collect()
        })
        .collect();
    FloatImage {
        width: w,
        height: h,
        data: rows.concat(),
    }
}

/// Scharr-smoothed first derivatives with sample spacing `d`.
fn derivatives(img: &FloatImage, d: usize) -> (FloatImage, FloatImage) {
    let d = d as isize;
    let inv = 1.0 / (2.0 * d as f32);
    let gx = FloatImage::from_fn(img.width, img.height, |x, y| {
        let (x, y) = (x as isize, y as isize);
        let diff = |yy: isize| img.at(x + d, yy) - img.at(x - d, yy);
        (3.0 * diff(y - d) + 10.0 * diff(y) + 3.0 * diff(y + d)) / 16.0 * inv
    });
    let gy = FloatImage::from_fn(img.width, img.height, |x, y| {
        let (x, y) = (x as isize, y as isize);
        let diff = |xx: isize| img.at(xx, y + d) - img.at(xx, y - d);
        (3.0 * diff(x - d) + 10.0 * diff(x) + 3.0 * diff(x + d)) / 16.0 * inv
    });
    (gx, gy)
}

fn conductivity(lx: &FloatImage, ly: &FloatImage, k: f64) -> FloatImage {
    let k2 = (k * k) as f32;
    FloatImage {
        width: lx.width,
        height: lx.height,
        data: lx
            .data
            .iter()
            .zip(&ly.data)
            .map(|(a, b)| 1.0 / (1.0 + (a * a + b * b) / k2))
            .collect(),
    }
}

/// Gradient-magnitude percentile of the lightly smoothed image.
fn contrast_factor(img: &FloatImage, percentile: f64) -> f64 {
    let smooth = img.gaussian_blur(1.0);
    let (gx, gy) = derivatives(&smooth, 1);
    let mut mags: Vec<f32> = gx
        .data
        .iter()
        .zip(&gy.data)
        .map(|(a, b)| (a * a + b * b).sqrt())
        .filter(|m| *m > 0.0)
        .collect();
    if mags.is_empty() {
        return 0.03;
    }
    let idx = ((percentile / 100.0) * (mags.len() - 1) as f64).round() as usize;
    let (_, v, _) = mags.select_nth_unstable_by(idx, f32::total_cmp);
    (*v as f64).max(1e-6)
}

struct Level {
    octave: usize,
    /// σ in original-image pixels.
    sigma: f64,
    /// σ in this octave's pixels.
    sigma_oct: f64,
    lt: FloatImage,
    lx: FloatImage,
    ly: FloatImage,
    det: FloatImage,
}

fn scale_space(img: &FloatImage, p: &AkazeParams) -> Vec<Level> {
    let mut k = contrast_factor(img, p.diffusivity_contrast_percentile);
    let mut lt = img.gaussian_blur(BASE_SIGMA as f32);
    let max_oct = (0..p.octaves)
        .take_while(|o| img.width.min(img.height) >> o >= MIN_OCTAVE_SIZE)
        .count()
        .max(1);
    let mut levels = Vec::new();
    let mut prev_time = 0.5 * BASE_SIGMA * BASE_SIGMA;
    for o in 0..max_oct {
        for s in 0..p.sublevels {
            let sigma = BASE_SIGMA * 2f64.powf(o as f64 + s as f64 / p.sublevels as f64);
            let time = 0.5 * sigma * sigma;
            if o > 0 && s == 0 {
                lt = lt.downsample_half();
                k *= 0.75;
            }
            let ratio = (1u64 << o) as f64;
            // Diffusion time measured in this octave's pixels.
            let dt = (time - prev_time) / (ratio * ratio);
            prev_time = time;
            if dt > 0.0 {
                let smooth = lt.gaussian_blur(1.0);
                let (gx, gy) = derivatives(&smooth, 1);
                let c = conductivity(&gx, &gy, k);
                for tau in fed_step_sizes(dt, TAU_MAX) {
                    lt = diffusion_step(&lt, &c, tau);
                }
            }
            let sigma_oct = sigma / ratio;
            let d = sigma_oct.round().max(1.0) as usize;
            let (lx, ly) = derivatives(&lt, d);
            let (lxx, lxy) = derivatives(&lx, d);
            let (_, lyy) = derivatives(&ly, d);
            let norm = (sigma_oct * sigma_oct * sigma_oct * sigma_oct) as f32;
            let det = FloatImage {
                width: lt.width,
                height: lt.height,
                data: (0..lt.data.len())
                    .map(|i| (lxx.data[i] * lyy.data[i] - lxy.data[i] * lxy.data[i]) * norm)
                    .collect(),
            };
            levels.push(Level {
                octave: o,
                sigma,
                sigma_oct,
                lt: lt.clone(),
                lx,
                ly,
                det,
            });
        }
    }
    levels
}

struct Found {
    level: usize,
    x: f64,
    y: f64,
}

fn detect(levels: &[Level], p: &AkazeParams) -> Vec<(KeyPoint, Found)> {
    let threshold = p.detector_threshold as f32;
    let per_level: Vec<Vec<(KeyPoint, Found)>> = (0..levels.len())
        .into_par_iter()
        .map(|li| {
            let lv = &levels[li];
            let det = &lv.det;
            let (w, h) = (det.width, det.height);
            let border = (lv.sigma_oct.round() as usize).max(1) + 1;
            let neighbours: Vec<&FloatImage> = [li.checked_sub(1), Some(li + 1)]
                .into_iter()
                .flatten()
                .filter(|&j| j < levels.len() && levels[j].octave == lv.octave)
                .map(|j| &levels[j].det)
                .collect();
            let mut out = Vec::new();
            if w <= 2 * border || h <= 2 * border {
                return out;
            }
            for y in border..h - border {
                for x in border..w - border {
                    let v = det.get(x, y);
                    if v <= threshold {
                        continue;
                    }
                    let mut is_max = true;
                    'scan: for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            let (xx, yy) = ((x as isize + dx) as usize, (y as isize + dy) as usize);
                            if (dx != 0 || dy != 0) && det.get(xx, yy) >= v {
                                is_max = false;
                                break 'scan;
                            }
                            if neighbours.iter().any(|n| n.get(xx, yy) >= v) {
                                is_max = false;
                                break 'scan;
                            }
                        }
                    }
                    if !is_max {
                        continue;
                    }
                    let (l, r) = (det.get(x - 1, y) as f64, det.get(x + 1, y) as f64);
                    let (u, d) = (det.get(x, y - 1) as f64, det.get(x, y + 1) as f64);
                    let c = v as f64;
                    let dxx = l + r - 2.0 * c;
                    let dyy = u + d - 2.0 * c;
                    let dxy = 0.25
                        * (det.get(x + 1, y + 1) as f64 - det.get(x - 1, y + 1) as f64 - det.get(x + 1, y - 1) as f64
                            + det.get(x - 1, y - 1) as f64);
                    let (gx, gy) = (0.5 * (r - l), 0.5 * (d - u));
                    let hdet = dxx * dyy - dxy * dxy;
                    if hdet.abs() < 1e-20 {
                        continue;
                    }
                    let ox = -(dyy * gx - dxy * gy) / hdet;
                    let oy = -(dxx * gy - dxy * gx) / hdet;
                    if ox.abs() > 1.0 || oy.abs() > 1.0 {
                        continue;
                    }
                    let (fx, fy) = (x as f64 + ox, y as f64 + oy);
                    let ratio = (1u64 << lv.octave) as f64;
                    out.push((
                        KeyPoint {
                            x: fx * ratio,
                            y: fy * ratio,
                            scale: lv.sigma,
                            orientation: 0.0,
                            response: c,
                        },
                        Found {
                            level: li,
                            x: fx,
                            y: fy,
                        },
                    ));
                }
            }
            out
        })
        .collect();
    per_level.into_iter().flatten().collect()
}

/// Dominant direction of the first-derivative field: the π/3 sector with the
/// largest summed gradient vector.
fn orientation(lv: &Level, x: f64, y: f64) -> f64 {
    let s = lv.sigma_oct.round().max(1.0) as isize;
    let (cx, cy) = (x.round() as isize, y.round() as isize);
    let sigma = 2.5 * s as f64;
    let mut samples = Vec::new();
    for i in -6isize..=6 {
        for j in -6isize..=6 {
            if i * i + j * j >= 36 {
                continue;
            }
            let (px, py) = (cx + i * s, cy + j * s);
            let g = (-(((i * s) as f64).powi(2) + ((j * s) as f64).powi(2)) / (2.0 * sigma * sigma)).exp();
            let rx = g * lv.lx.at(px, py) as f64;
            let ry = g * lv.ly.at(px, py) as f64;
            samples.push((ry.atan2(rx).rem_euclid(2.0 * PI), rx, ry));
        }
    }
    let mut best = (0.0, 0.0, 0.0f64);
    let mut start = 0.0;
    while start < 2.0 * PI {
        let end = start + PI / 3.0;
        let (mut sx, mut sy) = (0.0, 0.0);
        for &(a, rx, ry) in &samples {
            let inside = if end < 2.0 * PI {
                a >= start && a < end
            } else {
                a >= start || a < end - 2.0 * PI
            };
            if inside {
                sx += rx;
                sy += ry;
            }
        }
        let m = sx * sx + sy * sy;
        if m > best.2 {
            best = (sx, sy, m);
        }
        start += 0.15;
    }
    if best.2 == 0.0 {
        0.0
    } else {
        best.1.atan2(best.0).rem_euclid(2.0 * PI)
    }
}

fn mldb(lv: &Level, x: f64, y: f64, theta: f64) -> Vec<u8> {
    let s = lv.sigma_oct;
    let (co, si) = (theta.cos(), theta.sin());
    let nbits = mldb_bit_count(&GRIDS);
    let mut bytes = vec![0u8; nbits.div_ceil(8)];
    let mut bit = 0usize;
    for &g in &GRIDS {
        let cell = 2.0 * PATTERN_SIZE / g as f64;
        let mut values = Vec::with_capacity(g * g);
        for cy in 0..g {
            for cx in 0..g {
                let (mut vi, mut vx, mut vy) = (0.0f64, 0.0f64, 0.0f64);
                for my in 0..SAMPLES_PER_CELL_AXIS {
                    for mx in 0..SAMPLES_PER_CELL_AXIS {
                        let l = -PATTERN_SIZE + cell * (cx as f64 + (mx as f64 + 0.5) / SAMPLES_PER_CELL_AXIS as f64);
                        let k = -PATTERN_SIZE + cell * (cy as f64 + (my as f64 + 0.5) / SAMPLES_PER_CELL_AXIS as f64);
                        let px = x + s * (l * co - k * si);
                        let py = y + s * (l * si + k * co);
                        let (gx, gy) = (
                            lv.lx.sample(px as f32, py as f32) as f64,
                            lv.ly.sample(px as f32, py as f32) as f64,
                        );
                        vi += lv.lt.sample(px as f32, py as f32) as f64;
                        vx += gx * co + gy * si;
                        vy += -gx * si + gy * co;
                    }
                }
                values.push([vi, vx, vy]);
            }
        }
        for i in 0..values.len() {
            for j in i + 1..values.len() {
                for ch in 0..3 {
                    if values[i][ch] > values[j][ch] {
                        bytes[bit / 8] |= 1 << (bit % 8);
                    }
                    bit += 1;
                }
            }
        }
    }
    bytes
}

pub fn detect_akaze(img: &GeoRaster, params: &AkazeParams) -> Result<(Vec<KeyPoint>, DescriptorSet)> {
    require_size(img, 32)?;
    params.validate()?;
    let image = FloatImage::from_raster(img);
    let levels = scale_space(&image, params);
    let mut found: Vec<(KeyPoint, Found)> = detect(&levels, params)
        .into_iter()
        .filter(|(kp, _)| kp.x >= 0.0 && kp.y >= 0.0 && kp.x < img.width() as f64 && kp.y < img.height() as f64)
        .collect();
    keep_strongest(&mut found, params.max_features);
    let described: Vec<(KeyPoint, Descriptor)> = found
        .par_iter()
        .map(|(kp, f)| {
            let lv = &levels[f.level];
            let theta = orientation(lv, f.x, f.y);
            let kp = KeyPoint {
                orientation: theta,
                ..*kp
            };
            (kp, Descriptor::Binary(mldb(lv, f.x, f.y, theta)))
        })
        .collect();
    let (keypoints, rows) = described.into_iter().unzip();
    Ok((
        keypoints,
        DescriptorSet {
            kind: DescriptorKind::BinaryHamming,
            dim: mldb_bit_count(&GRIDS),
            rows,
        },
    ))
}
