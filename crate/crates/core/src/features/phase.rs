//! Phase congruency from a log-Gabor filter bank, with the maximum index map.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::require_size;
use crate::error::{invalid_param, Result};
use crate::raster::GeoRaster;

const EPS: f64 = 1e-4;
const WIDTH_CUTOFF: f64 = 0.5;
const WIDTH_GAIN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcParams {
    pub n_scales: usize,
    pub n_orientations: usize,
    /// Wavelength of the smallest filter, pixels.
    pub min_wavelength: f64,
    /// Wavelength ratio between successive scales.
    pub mult: f64,
    /// Bandwidth: ratio of the Gaussian σ to the filter center frequency, in log space.
    pub sigma_onf: f64,
    /// Noise threshold in standard deviations above the estimated noise energy.
    pub noise_k: f64,
}

impl Default for PcParams {
    fn default() -> Self {
        Self {
            n_scales: 4,
            n_orientations: 6,
            min_wavelength: 3.0,
            mult: 1.6,
            sigma_onf: 0.75,
            noise_k: 3.0,
        }
    }
}

impl PcParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_scales < 2 {
            return Err(invalid_param("n_scales", "must be at least 2"));
        }
        if self.n_orientations == 0 || self.n_orientations > 255 {
            return Err(invalid_param("n_orientations", "must lie in 1..=255"));
        }
        if !(self.min_wavelength >= 2.0) {
            return Err(invalid_param("min_wavelength", "must be at least 2 px"));
        }
        if !(self.mult > 1.0) {
            return Err(invalid_param("mult", "must exceed 1"));
        }
        if !(self.sigma_onf > 0.0 && self.sigma_onf < 1.0) {
            return Err(invalid_param("sigma_onf", "must lie in (0, 1)"));
        }
        if !(self.noise_k >= 0.0) {
            return Err(invalid_param("noise_k", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PhaseCongruency {
    pub width: usize,
    pub height: usize,
    /// Noise-compensated, weighted congruency in `[0, 1]`.
    pub pc: Vec<f32>,
    /// 1-based index of the orientation with the largest summed amplitude.
    pub mim: Vec<u8>,
    /// Summed filter amplitude over scales, one map per orientation.
    pub orientation_energy: Vec<Vec<f32>>,
    /// Minimum moment of the per-orientation congruency; large at corners.
    pub min_moment: Vec<f32>,
    /// Maximum moment; large on edges.
    pub max_moment: Vec<f32>,
}

pub fn phase_congruency(img: &GeoRaster, params: &PcParams) -> Result<PhaseCongruency> {
    require_size(img, 16)?;
    params.validate()?;
    let data: Vec<f64> = img.band(0).iter().map(|v| *v as f64).collect();
    Ok(compute(&data, img.width(), img.height(), params))
}

pub(crate) fn compute(data: &[f64], w: usize, h: usize, p: &PcParams) -> PhaseCongruency {
    let spectrum = periodic_spectrum(data, w, h);

    // Frequency grid, cycles per pixel, with the y axis pointing up.
    let freq = |i: usize, n: usize| -> f64 {
        if i < n.div_ceil(2) {
            i as f64 / n as f64
        } else {
            (i as f64 - n as f64) / n as f64
        }
    };
    let mut radius = vec![0.0f64; w * h];
    let mut theta = vec![0.0f64; w * h];
    for r in 0..h {
        let v = freq(r, h);
        for c in 0..w {
            let u = freq(c, w);
            radius[r * w + c] = (u * u + v * v).sqrt();
            theta[r * w + c] = (-v).atan2(u);
        }
    }
    radius[0] = 1.0;
    let lowpass: Vec<f64> = radius.iter().map(|r| 1.0 / (1.0 + (r / 0.45).powi(30))).collect();
    let log_sigma2 = 2.0 * p.sigma_onf.ln().powi(2);
    let radial: Vec<Vec<f64>> = (0..p.n_scales)
        .map(|s| {
            let fo = 1.0 / (p.min_wavelength * p.mult.powi(s as i32));
            let mut g: Vec<f64> = radius
                .iter()
                .zip(&lowpass)
                .map(|(r, lp)| (-(r / fo).ln().powi(2) / log_sigma2).exp() * lp)
                .collect();
            g[0] = 0.0;
            g
        })
        .collect();

    struct OrientationOut {
        amplitude: Vec<f64>,
        congruency: Vec<f64>,
        weighted_energy: Vec<f64>,
    }

    let per_orientation: Vec<OrientationOut> = (0..p.n_orientations)
        .into_par_iter()
        .map(|o| {
            let angle = o as f64 * PI / p.n_orientations as f64;
            let (ca, sa) = (angle.cos(), angle.sin());
            let spread: Vec<f64> = theta
                .iter()
                .map(|t| {
                    let ds = t.sin() * ca - t.cos() * sa;
                    let dc = t.cos() * ca + t.sin() * sa;
                    let dtheta = (ds.atan2(dc).abs() * p.n_orientations as f64 / 2.0).min(PI);
                    (dtheta.cos() + 1.0) / 2.0
                })
                .collect();

            let n = w * h;
            let mut sum_e = vec![0.0; n];
            let mut sum_o = vec![0.0; n];
            let mut sum_an = vec![0.0; n];
            let mut max_an = vec![0.0; n];
            let mut responses: Vec<Vec<Complex<f64>>> = Vec::with_capacity(p.n_scales);
            let mut tau = 0.0;
            for (s, g) in radial.iter().enumerate() {
                let mut buf: Vec<Complex<f64>> = spectrum
                    .iter()
                    .enumerate()
                    .map(|(i, f)| f * (g[i] * spread[i]))
                    .collect();
                fft2(&mut buf, w, h, true);
                let an: Vec<f64> = buf.iter().map(|c| c.norm()).collect();
                for i in 0..n {
                    sum_e[i] += buf[i].re;
                    sum_o[i] += buf[i].im;
                    sum_an[i] += an[i];
                    max_an[i] = if s == 0 { an[i] } else { max_an[i].max(an[i]) };
                }
                if s == 0 {
                    tau = median(&sum_an) / 4f64.ln().sqrt();
                }
                responses.push(buf);
            }

            let mut energy = vec![0.0; n];
            for i in 0..n {
                let x = (sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]).sqrt() + 1e-12;
                let (me, mo) = (sum_e[i] / x, sum_o[i] / x);
                for r in &responses {
                    let (e, od) = (r[i].re, r[i].im);
                    energy[i] += e * me + od * mo - (e * mo - od * me).abs();
                }
            }

            let inv = 1.0 / p.mult;
            let total_tau = tau * (1.0 - inv.powi(p.n_scales as i32)) / (1.0 - inv);
            let noise_mean = total_tau * (PI / 2.0).sqrt();
            let noise_sigma = total_tau * ((4.0 - PI) / 2.0).sqrt();
            let threshold = (noise_mean + p.noise_k * noise_sigma).max(1e-12);

            let weighted_energy: Vec<f64> = (0..n)
                .map(|i| {
                    let spread_width = (sum_an[i] / (max_an[i] + 1e-12) - 1.0) / (p.n_scales as f64 - 1.0);
                    let weight = 1.0 / (1.0 + ((WIDTH_CUTOFF - spread_width) * WIDTH_GAIN).exp());
                    weight * (energy[i] - threshold).max(0.0)
                })
                .collect();
            let congruency = weighted_energy
                .iter()
                .zip(&sum_an)
                .map(|(e, a)| e / (a + EPS))
                .collect();
            OrientationOut {
                amplitude: sum_an,
                congruency,
                weighted_energy,
            }
        })
        .collect();

    let n = w * h;
    let no = p.n_orientations as f64;
    let mut pc = vec![0.0f32; n];
    let mut mim = vec![1u8; n];
    let mut min_moment = vec![0.0f32; n];
    let mut max_moment = vec![0.0f32; n];
    for i in 0..n {
        let (mut num, mut den) = (0.0, 0.0);
        let (mut best, mut best_amp) = (0usize, f64::MIN);
        let (mut cx, mut cy, mut cxy) = (0.0, 0.0, 0.0);
        for (o, out) in per_orientation.iter().enumerate() {
            num += out.weighted_energy[i];
            den += out.amplitude[i];
            if out.amplitude[i] > best_amp {
                best_amp = out.amplitude[i];
                best = o;
            }
            let angle = o as f64 * PI / no;
            let (c, s) = (out.congruency[i] * angle.cos(), out.congruency[i] * angle.sin());
            cx += c * c;
            cy += s * s;
            cxy += c * s;
        }
        pc[i] = (num / (den + EPS)).clamp(0.0, 1.0) as f32;
        mim[i] = (best + 1) as u8;
        let (cx, cy, cxy) = (cx / (no / 2.0), cy / (no / 2.0), 4.0 * cxy / no);
        let denom = (cxy * cxy + (cx - cy) * (cx - cy)).sqrt() + 1e-12;
        max_moment[i] = ((cy + cx + denom) / 2.0) as f32;
        min_moment[i] = ((cy + cx - denom) / 2.0).max(0.0) as f32;
    }
    PhaseCongruency {
        width: w,
        height: h,
        pc,
        mim,
        orientation_energy: per_orientation
            .into_iter()
            .map(|o| o.amplitude.into_iter().map(|v| v as f32).collect())
            .collect(),
        min_moment,
        max_moment,
    }
}

fn median(v: &[f64]) -> f64 {
    let mut c = v.to_vec();
    let mid = c.len() / 2;
    let (_, m, _) = c.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Spectrum of the periodic component of the image (smooth boundary
/// discontinuities removed), so filters do not respond to the frame edges.
fn periodic_spectrum(data: &[f64], w: usize, h: usize) -> Vec<Complex<f64>> {
    let mut v = vec![0.0f64; w * h];
    for c in 0..w {
        let d = data[(h - 1) * w + c] - data[c];
        v[c] += d;
        v[(h - 1) * w + c] -= d;
    }
    for r in 0..h {
        let d = data[r * w + w - 1] - data[r * w];
        v[r * w] += d;
        v[r * w + w - 1] -= d;
    }
    let mut img: Vec<Complex<f64>> = data.iter().map(|x| Complex::new(*x, 0.0)).collect();
    let mut boundary: Vec<Complex<f64>> = v.iter().map(|x| Complex::new(*x, 0.0)).collect();
    fft2(&mut img, w, h, false);
    fft2(&mut boundary, w, h, false);
    for r in 0..h {
        let cy = (2.0 * PI * r as f64 / h as f64).cos();
        for c in 0..w {
            let cx = (2.0 * PI * c as f64 / w as f64).cos();
            let denom = 2.0 * cx + 2.0 * cy - 4.0;
            let i = r * w + c;
            if r == 0 && c == 0 {
                continue;
            }
            img[i] -= boundary[i] / denom;
        }
    }
    img
}

/// In-place 2-D FFT; the inverse is scaled by `1 / (w h)`.
pub(crate) fn fft2(buf: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = buf[r * w + c];
        }
        col_fft.process(&mut col);
        for r in 0..h {
            buf[r * w + c] = col[r];
        }
    }
    if inverse {
        let scale = 1.0 / (w * h) as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_round_trip() {
        let (w, h) = (12, 7);
        let orig: Vec<Complex<f64>> = (0..w * h).map(|i| Complex::new((i * 37 % 11) as f64, 0.0)).collect();
        let mut buf = orig.clone();
        fft2(&mut buf, w, h, false);
        fft2(&mut buf, w, h, true);
        for (a, b) in orig.iter().zip(&buf) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn constant_image_has_no_congruency() {
        let img = GeoRaster::filled(40, 32, crate::raster::SampleDepth::U8, 90.0).unwrap();
        let pc = phase_congruency(&img, &PcParams::default()).unwrap();
        assert!(pc.pc.iter().all(|v| *v < 1e-6));
    }
}
