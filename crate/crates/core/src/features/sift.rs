//! Difference-of-Gaussians keypoints with gradient-histogram descriptors.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    keep_strongest, l2_normalize, require_size, Descriptor, DescriptorKind, DescriptorSet, FloatImage, KeyPoint,
};
use crate::error::{invalid_param, Result};
use crate::raster::GeoRaster;

const SIGMA0: f64 = 1.6;
const INPUT_BLUR: f64 = 0.5;
const BORDER: usize = 5;
const ORI_BINS: usize = 36;
const ORI_PEAK_RATIO: f32 = 0.8;
const DESC_WIDTH: usize = 4;
const DESC_BINS: usize = 8;
const DESC_CLIP: f32 = 0.2;
pub const SIFT_DIM: usize = DESC_WIDTH * DESC_WIDTH * DESC_BINS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiftParams {
    pub octaves: usize,
    pub scales_per_octave: usize,
    /// Minimum |DoG| at the refined extremum, intensities on a `[0, 1]` scale.
    pub contrast_threshold: f64,
    pub edge_ratio: f64,
    pub max_features: usize,
    /// Double the image before building the pyramid.
    pub upsample: bool,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            octaves: 4,
            scales_per_octave: 3,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            max_features: 5000,
            upsample: false,
        }
    }
}

impl SiftParams {
    pub fn validate(&self) -> Result<()> {
        if self.octaves == 0 {
            return Err(invalid_param("octaves", "must be at least 1"));
        }
        if self.scales_per_octave == 0 {
            return Err(invalid_param("scales_per_octave", "must be at least 1"));
        }
        if !(self.contrast_threshold >= 0.0) {
            return Err(invalid_param("contrast_threshold", "must be non-negative"));
        }
        if !(self.edge_ratio >= 1.0) {
            return Err(invalid_param("edge_ratio", "must be at least 1"));
        }
        Ok(())
    }
}

pub fn detect_sift(img: &GeoRaster, params: &SiftParams) -> Result<(Vec<KeyPoint>, DescriptorSet)> {
    require_size(img, 32)?;
    sift_on_image(&FloatImage::from_raster(img), params)
}

/// SIFT on an image already scaled to `[0, 1]`.
pub fn sift_on_image(img: &FloatImage, params: &SiftParams) -> Result<(Vec<KeyPoint>, DescriptorSet)> {
    params.validate()?;
    let s = params.scales_per_octave;
    let (base, base_scale) = if params.upsample {
        (img.resize(img.width * 2, img.height * 2), 0.5)
    } else {
        (img.clone(), 1.0)
    };
    let input_blur = INPUT_BLUR / base_scale;
    let base = base.gaussian_blur((SIGMA0 * SIGMA0 - input_blur * input_blur).max(0.01).sqrt() as f32);

    // Octaves stop once the image gets too small to host a descriptor.
    let max_octaves = ((base.width.min(base.height) as f64).log2() - 3.0).floor().max(1.0) as usize;
    let n_oct = params.octaves.min(max_octaves);
    let gauss = build_gaussian_pyramid(base, n_oct, s);
    let dog: Vec<Vec<FloatImage>> = gauss
        .iter()
        .map(|oct| oct.windows(2).map(|w| difference(&w[1], &w[0])).collect())
        .collect();

    let jobs: Vec<(usize, usize)> = (0..n_oct).flat_map(|o| (1..=s).map(move |l| (o, l))).collect();
    let found: Vec<Vec<Candidate>> = jobs
        .par_iter()
        .map(|&(o, l)| find_extrema(&dog[o], o, l, params))
        .collect();

    let oriented: Vec<(KeyPoint, Candidate)> = found
        .into_iter()
        .flatten()
        .flat_map(|c| {
            let layer = c.layer_index();
            orientations(&gauss[c.octave][layer], &c).into_iter().map(move |theta| {
                let f = (1u64 << c.octave) as f64 * base_scale;
                let kp = KeyPoint {
                    x: c.x * f,
                    y: c.y * f,
                    scale: c.sigma * f,
                    orientation: theta,
                    response: c.response,
                };
                (kp, c)
            })
        })
        .filter(|(kp, _)| kp.x >= 0.0 && kp.y >= 0.0 && kp.x < img.width as f64 && kp.y < img.height as f64)
        .collect();
    let mut oriented = oriented;
    keep_strongest(&mut oriented, params.max_features);

    let rows: Vec<Descriptor> = oriented
        .par_iter()
        .map(|(kp, c)| Descriptor::Float(describe(&gauss[c.octave][c.layer_index()], c, kp.orientation)))
        .collect();
    Ok((
        oriented.into_iter().map(|(kp, _)| kp).collect(),
        DescriptorSet {
            kind: DescriptorKind::FloatL2,
            dim: SIFT_DIM,
            rows,
        },
    ))
}

fn build_gaussian_pyramid(base: FloatImage, n_oct: usize, s: usize) -> Vec<Vec<FloatImage>> {
    let k = 2f64.powf(1.0 / s as f64);
    let increments: Vec<f32> = (1..s + 3)
        .map(|i| {
            let prev = SIGMA0 * k.powi(i as i32 - 1);
            let total = prev * k;
            (total * total - prev * prev).sqrt() as f32
        })
        .collect();
    let mut pyramid: Vec<Vec<FloatImage>> = Vec::with_capacity(n_oct);
    for o in 0..n_oct {
        let first = if o == 0 {
            base.clone()
        } else {
            pyramid[o - 1][s].downsample_half()
        };
        let mut levels = vec![first];
        for inc in &increments {
            let next = levels.last().unwrap().gaussian_blur(*inc);
            levels.push(next);
        }
        pyramid.push(levels);
    }
    pyramid
}

fn difference(a: &FloatImage, b: &FloatImage) -> FloatImage {
    FloatImage {
        width: a.width,
        height: a.height,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect(),
    }
}

/// A refined extremum in octave coordinates.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    octave: usize,
    /// Integer DoG layer the extremum converged at.
    layer: usize,
    /// Fractional layer offset.
    layer_offset: f64,
    x: f64,
    y: f64,
    /// σ relative to the octave's pixel grid.
    sigma: f64,
    response: f64,
}

impl Candidate {
    /// Gaussian level closest to the refined scale.
    fn layer_index(&self) -> usize {
        (self.layer as f64 + self.layer_offset).round().max(0.0) as usize
    }
}

fn find_extrema(dog: &[FloatImage], octave: usize, layer: usize, p: &SiftParams) -> Vec<Candidate> {
    let s = p.scales_per_octave;
    let img = &dog[layer];
    let (w, h) = (img.width, img.height);
    if w <= 2 * BORDER || h <= 2 * BORDER {
        return Vec::new();
    }
    let prelim = (0.5 * p.contrast_threshold / s as f64) as f32;
    let mut out = Vec::new();
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            let v = img.get(x, y);
            if v.abs() <= prelim {
                continue;
            }
            if !is_extremum(dog, layer, x, y, v) {
                continue;
            }
            if let Some(c) = refine(dog, octave, layer, x, y, p) {
                out.push(c);
            }
        }
    }
    out
}

fn is_extremum(dog: &[FloatImage], layer: usize, x: usize, y: usize, v: f32) -> bool {
    let greater = v > 0.0;
    for img in &dog[layer - 1..=layer + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                let n = img.get(xx, yy);
                if std::ptr::eq(img, &dog[layer]) && xx == x && yy == y {
                    continue;
                }
                if (greater && n >= v) || (!greater && n <= v) {
                    return false;
                }
            }
        }
    }
    true
}

fn refine(dog: &[FloatImage], octave: usize, layer: usize, x: usize, y: usize, p: &SiftParams) -> Option<Candidate> {
    let s = p.scales_per_octave;
    let (mut l, mut xi, mut yi) = (layer, x, y);
    let (w, h) = (dog[0].width, dog[0].height);
    let mut offset = [0.0f64; 3];
    let mut converged = false;
    for _ in 0..5 {
        let d = |dl: isize, dx: isize, dy: isize| -> f64 {
            dog[(l as isize + dl) as usize].get((xi as isize + dx) as usize, (yi as isize + dy) as usize) as f64
        };
        let g = [
            0.5 * (d(0, 1, 0) - d(0, -1, 0)),
            0.5 * (d(0, 0, 1) - d(0, 0, -1)),
            0.5 * (d(1, 0, 0) - d(-1, 0, 0)),
        ];
        let c = d(0, 0, 0);
        let dxx = d(0, 1, 0) + d(0, -1, 0) - 2.0 * c;
        let dyy = d(0, 0, 1) + d(0, 0, -1) - 2.0 * c;
        let dss = d(1, 0, 0) + d(-1, 0, 0) - 2.0 * c;
        let dxy = 0.25 * (d(0, 1, 1) - d(0, -1, 1) - d(0, 1, -1) + d(0, -1, -1));
        let dxs = 0.25 * (d(1, 1, 0) - d(1, -1, 0) - d(-1, 1, 0) + d(-1, -1, 0));
        let dys = 0.25 * (d(1, 0, 1) - d(1, 0, -1) - d(-1, 0, 1) + d(-1, 0, -1));
        let hess = nalgebra::Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
        let solved = hess.lu().solve(&nalgebra::Vector3::new(-g[0], -g[1], -g[2]))?;
        offset = [solved[0], solved[1], solved[2]];
        if offset.iter().all(|o| o.abs() < 0.5) {
            converged = true;
            break;
        }
        if offset.iter().any(|o| o.abs() > 1e6 || !o.is_finite()) {
            return None;
        }
        let nx = xi as isize + offset[0].round() as isize;
        let ny = yi as isize + offset[1].round() as isize;
        let nl = l as isize + offset[2].round() as isize;
        if nl < 1 || nl > s as isize || nx < BORDER as isize || ny < BORDER as isize {
            return None;
        }
        if nx >= (w - BORDER) as isize || ny >= (h - BORDER) as isize {
            return None;
        }
        (xi, yi, l) = (nx as usize, ny as usize, nl as usize);
    }
    if !converged {
        return None;
    }

    let d = |dl: isize, dx: isize, dy: isize| -> f64 {
        dog[(l as isize + dl) as usize].get((xi as isize + dx) as usize, (yi as isize + dy) as usize) as f64
    };
    let g = [
        0.5 * (d(0, 1, 0) - d(0, -1, 0)),
        0.5 * (d(0, 0, 1) - d(0, 0, -1)),
        0.5 * (d(1, 0, 0) - d(-1, 0, 0)),
    ];
    let contrast = d(0, 0, 0) + 0.5 * (g[0] * offset[0] + g[1] * offset[1] + g[2] * offset[2]);
    if contrast.abs() < p.contrast_threshold {
        return None;
    }
    let c = d(0, 0, 0);
    let dxx = d(0, 1, 0) + d(0, -1, 0) - 2.0 * c;
    let dyy = d(0, 0, 1) + d(0, 0, -1) - 2.0 * c;
    let dxy = 0.25 * (d(0, 1, 1) - d(0, -1, 1) - d(0, 1, -1) + d(0, -1, -1));
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    let r = p.edge_ratio;
    if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
        return None;
    }
    let x = xi as f64 + offset[0];
    let y = yi as f64 + offset[1];
    Some(Candidate {
        octave,
        layer: l,
        layer_offset: offset[2],
        x: x.clamp(0.0, (w - 1) as f64),
        y: y.clamp(0.0, (h - 1) as f64),
        sigma: SIGMA0 * 2f64.powf((l as f64 + offset[2]) / s as f64),
        response: contrast.abs(),
    })
}

/// Dominant gradient orientations around a candidate.
fn orientations(img: &FloatImage, c: &Candidate) -> Vec<f64> {
    let sigma = 1.5 * c.sigma;
    let radius = (3.0 * sigma).round() as isize;
    let (cx, cy) = (c.x.round() as isize, c.y.round() as isize);
    let (w, h) = (img.width as isize, img.height as isize);
    let mut hist = [0.0f32; ORI_BINS];
    let denom = (2.0 * sigma * sigma) as f32;
    for dy in -radius..=radius {
        let y = cy + dy;
        if y <= 0 || y >= h - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let x = cx + dx;
            if x <= 0 || x >= w - 1 {
                continue;
            }
            let (xu, yu) = (x as usize, y as usize);
            let gx = img.get(xu + 1, yu) - img.get(xu - 1, yu);
            let gy = img.get(xu, yu + 1) - img.get(xu, yu - 1);
            let weight = (-((dx * dx + dy * dy) as f32) / denom).exp();
            let angle = (gy as f64).atan2(gx as f64).rem_euclid(2.0 * PI);
            let bin = ((angle * ORI_BINS as f64 / (2.0 * PI)).round() as usize) % ORI_BINS;
            hist[bin] += weight * (gx * gx + gy * gy).sqrt();
        }
    }
    let raw = hist;
    for i in 0..ORI_BINS {
        let at = |k: isize| raw[(i as isize + k).rem_euclid(ORI_BINS as isize) as usize];
        hist[i] = (at(-2) + at(2)) / 16.0 + (at(-1) + at(1)) * 4.0 / 16.0 + at(0) * 6.0 / 16.0;
    }
    let max = hist.iter().cloned().fold(0.0f32, f32::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..ORI_BINS {
        let l = hist[(i + ORI_BINS - 1) % ORI_BINS];
        let r = hist[(i + 1) % ORI_BINS];
        let v = hist[i];
        if v > l && v > r && v >= ORI_PEAK_RATIO * max {
            let shift = 0.5 * (l - r) / (l - 2.0 * v + r);
            let bin = i as f64 + shift as f64;
            out.push((bin * 2.0 * PI / ORI_BINS as f64).rem_euclid(2.0 * PI));
        }
    }
    out
}

fn describe(img: &FloatImage, c: &Candidate, theta: f64) -> Vec<f32> {
    let d = DESC_WIDTH;
    let n = DESC_BINS;
    let hist_width = 3.0 * c.sigma;
    let radius = (hist_width * std::f64::consts::SQRT_2 * (d as f64 + 1.0) * 0.5).round() as isize;
    let radius = radius.min(((img.width * img.width + img.height * img.height) as f64).sqrt() as isize);
    let (cos_t, sin_t) = (theta.cos() / hist_width, theta.sin() / hist_width);
    let (cx, cy) = (c.x.round() as isize, c.y.round() as isize);
    let (w, h) = (img.width as isize, img.height as isize);
    let exp_scale = -1.0 / (d as f64 * d as f64 * 0.5);
    let bins_per_rad = n as f64 / (2.0 * PI);
    let stride = n + 2;
    let mut hist = vec![0.0f64; (d + 2) * (d + 2) * stride];

    for i in -radius..=radius {
        for j in -radius..=radius {
            let x_rot = j as f64 * cos_t + i as f64 * sin_t;
            let y_rot = -(j as f64) * sin_t + i as f64 * cos_t;
            let rbin = y_rot + d as f64 / 2.0 - 0.5;
            let cbin = x_rot + d as f64 / 2.0 - 0.5;
            if !(rbin > -1.0 && rbin < d as f64 && cbin > -1.0 && cbin < d as f64) {
                continue;
            }
            let (x, y) = (cx + j, cy + i);
            if x <= 0 || y <= 0 || x >= w - 1 || y >= h - 1 {
                continue;
            }
            let (xu, yu) = (x as usize, y as usize);
            let gx = (img.get(xu + 1, yu) - img.get(xu - 1, yu)) as f64;
            let gy = (img.get(xu, yu + 1) - img.get(xu, yu - 1)) as f64;
            let ori = (gy.atan2(gx) - theta).rem_euclid(2.0 * PI);
            let mag = (gx * gx + gy * gy).sqrt() * ((x_rot * x_rot + y_rot * y_rot) * exp_scale).exp();
            let obin = ori * bins_per_rad;

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (dr, dc, dob) = (rbin - r0, cbin - c0, obin - o0);
            let (r0, c0) = (r0 as isize, c0 as isize);
            let o0 = (o0 as isize).rem_euclid(n as isize) as usize;
            for (ri, wr) in [(0isize, 1.0 - dr), (1, dr)] {
                for (ci, wc) in [(0isize, 1.0 - dc), (1, dc)] {
                    for (oi, wo) in [(0usize, 1.0 - dob), (1, dob)] {
                        let rr = (r0 + ri + 1) as usize;
                        let cc = (c0 + ci + 1) as usize;
                        let oo = (o0 + oi) % n;
                        hist[(rr * (d + 2) + cc) * stride + oo] += mag * wr * wc * wo;
                    }
                }
            }
        }
    }

    let mut desc = Vec::with_capacity(d * d * n);
    for r in 0..d {
        for c in 0..d {
            for o in 0..n {
                desc.push(hist[((r + 1) * (d + 2) + c + 1) * stride + o] as f32);
            }
        }
    }
    l2_normalize(&mut desc);
    desc.iter_mut().for_each(|v| *v = v.min(DESC_CLIP));
    l2_normalize(&mut desc);
    desc
}
