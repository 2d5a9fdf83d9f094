//! Point-wise and histogram-driven intensity operations.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};
use crate::raster::{GeoRaster, SampleDepth};

/// 256-bin histogram of an 8-bit band over valid pixels.
pub fn histogram_u8(src: &GeoRaster, band: usize) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for v in src.valid_values(band) {
        hist[v as usize] += 1;
    }
    hist
}

fn cumulative(hist: &[u64; 256]) -> [u64; 256] {
    let mut cum = [0u64; 256];
    let mut acc = 0;
    for (c, h) in cum.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    cum
}

/// Linear min–max stretch of every band into `[0, 255]`, computed over valid pixels.
/// A constant band maps to 0.
pub fn normalize_u8(src: &GeoRaster) -> Result<GeoRaster> {
    if src.valid_count() == 0 {
        return Err(Error::EmptyValidRegion);
    }
    let bands = (0..src.band_count())
        .map(|b| {
            let (lo, hi) = src
                .valid_values(b)
                .fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v as f64), hi.max(v as f64)));
            let range = hi - lo;
            src.band(b)
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if !src.is_valid(i) || range <= 0.0 {
                        0.0
                    } else {
                        SampleDepth::U8.quantize(255.0 * (v as f64 - lo) / range)
                    }
                })
                .collect()
        })
        .collect();
    let out = src.with_bands(SampleDepth::U8, bands)?;
    match out.mask().map(<[bool]>::to_vec) {
        Some(mask) => out.with_mask(mask, 0.0),
        None => Ok(out),
    }
}

pub fn invert(src: &GeoRaster) -> Result<GeoRaster> {
    src.require_u8()?;
    src.map_samples(SampleDepth::U8, |v| 255.0 - v)
}

/// `round(c * ln(1 + v))` with `c = 255 / ln 256`, so 0 → 0 and 255 → 255.
pub fn log_transform(src: &GeoRaster) -> Result<GeoRaster> {
    src.require_u8()?;
    // c * ln(1 + v) == 255 * log2(1 + v) / 8; the log2 form is exact at powers of two.
    let lut: Vec<f32> = (0..256)
        .map(|v| SampleDepth::U8.quantize(255.0 * (1.0 + v as f64).log2() / 8.0))
        .collect();
    src.map_samples(SampleDepth::U8, |v| lut[v as usize])
}

/// Monotone CDF-inversion mapping `v ↦ min{u : CDF_ref(u) ≥ CDF_src(v)}`.
pub fn histogram_match_lut(src_hist: &[u64; 256], ref_hist: &[u64; 256]) -> Result<[u8; 256]> {
    let cs = cumulative(src_hist);
    let cr = cumulative(ref_hist);
    let (ns, nr) = (cs[255] as u128, cr[255] as u128);
    if ns == 0 || nr == 0 {
        return Err(Error::EmptyValidRegion);
    }
    let mut lut = [0u8; 256];
    let mut u = 0usize;
    for v in 0..256 {
        // CDF_ref(u) >= CDF_src(v)  <=>  cr[u] * ns >= cs[v] * nr, exact in integers.
        while (cr[u] as u128) * ns < (cs[v] as u128) * nr {
            u += 1;
        }
        lut[v] = u as u8;
    }
    Ok(lut)
}

pub fn histogram_match(src: &GeoRaster, reference: &GeoRaster) -> Result<GeoRaster> {
    src.require_u8()?;
    reference.require_u8()?;
    let lut = histogram_match_lut(&histogram_u8(src, 0), &histogram_u8(reference, 0))?;
    src.map_samples(SampleDepth::U8, |v| lut[v as usize] as f32)
}

/// Boost shadowed pixels toward the scene median.
///
/// Pixels at or below the `shadow_percentile` intensity `T` are multiplied by
/// `gain = min(target_gain_cap, median / shadow_mean)`. The gain fades
/// linearly to 1 across `(T, T + 2)`; brighter pixels are untouched.
pub fn shadow_normalize(src: &GeoRaster, shadow_percentile: f64, target_gain_cap: f64) -> Result<GeoRaster> {
    src.require_u8()?;
    if !(shadow_percentile > 0.0 && shadow_percentile < 50.0) {
        return Err(invalid_param("shadow_percentile", "must lie in (0, 50)"));
    }
    if !(target_gain_cap >= 1.0) {
        return Err(invalid_param("target_gain_cap", "must be at least 1"));
    }
    let hist = histogram_u8(src, 0);
    let n: u64 = hist.iter().sum();
    if n == 0 {
        return Err(Error::EmptyValidRegion);
    }
    let cum = cumulative(&hist);
    let threshold = cum
        .iter()
        .position(|&c| c as f64 >= shadow_percentile / 100.0 * n as f64)
        .unwrap_or(255);
    let median = median_from_hist(&hist, n);
    if threshold as f64 >= median {
        return Ok(src.clone());
    }
    let (mut sum, mut count) = (0u64, 0u64);
    for (v, h) in hist.iter().enumerate().take(threshold + 1) {
        sum += v as u64 * h;
        count += h;
    }
    let shadow_mean = sum as f64 / count as f64;
    let gain = if shadow_mean > 0.0 {
        (median / shadow_mean).min(target_gain_cap)
    } else {
        target_gain_cap
    };
    let t = threshold as f64;
    let lut: Vec<f32> = (0..256)
        .map(|v| {
            let v = v as f64;
            let weight = if v <= t {
                1.0
            } else if v < t + 2.0 {
                1.0 - (v - t) / 2.0
            } else {
                0.0
            };
            SampleDepth::U8.quantize(v * (1.0 + (gain - 1.0) * weight))
        })
        .collect();
    src.map_samples(SampleDepth::U8, |v| lut[v as usize])
}

// Conventional median: mean of the two middle order statistics for even counts.
fn median_from_hist(hist: &[u64; 256], n: u64) -> f64 {
    let kth = |k: u64| -> f64 {
        let mut acc = 0;
        for (v, h) in hist.iter().enumerate() {
            acc += h;
            if acc > k {
                return v as f64;
            }
        }
        255.0
    };
    if n % 2 == 1 {
        kth(n / 2)
    } else {
        (kth(n / 2 - 1) + kth(n / 2)) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandStrategy {
    MaxEntropy,
    MaxStddev,
    Index(usize),
}

/// Index of the band maximizing the strategy statistic; ties go to the lowest index.
pub fn select_reference_band(stack: &GeoRaster, strategy: BandStrategy) -> Result<usize> {
    let score: Box<dyn Fn(usize) -> f64> = match strategy {
        BandStrategy::Index(i) => {
            return if i < stack.band_count() {
                Ok(i)
            } else {
                Err(invalid_param(
                    "band index",
                    format!("{i} >= {} bands", stack.band_count()),
                ))
            }
        }
        BandStrategy::MaxEntropy => Box::new(|b| band_entropy(stack, b)),
        BandStrategy::MaxStddev => Box::new(|b| band_variance(stack, b)),
    };
    let mut best = 0;
    let mut best_score = score(0);
    for b in 1..stack.band_count() {
        let s = score(b);
        if s > best_score {
            best = b;
            best_score = s;
        }
    }
    Ok(best)
}

/// Shannon entropy (bits) of a 256-bin histogram over valid pixels. Non-8-bit
/// bands are binned over their own value range.
pub fn band_entropy(src: &GeoRaster, band: usize) -> f64 {
    let hist: Vec<u64> = if src.depth() == SampleDepth::U8 {
        histogram_u8(src, band).to_vec()
    } else {
        let (lo, hi) = src
            .valid_values(band)
            .fold((f32::MAX, f32::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let mut h = vec![0u64; 256];
        let span = (hi - lo) as f64;
        for v in src.valid_values(band) {
            let bin = if span > 0.0 {
                ((v - lo) as f64 / span * 255.0) as usize
            } else {
                0
            };
            h[bin.min(255)] += 1;
        }
        h
    };
    let n: u64 = hist.iter().sum();
    if n == 0 {
        return 0.0;
    }
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

/// Population variance over valid pixels; exact for integer-valued bands.
pub fn band_variance(src: &GeoRaster, band: usize) -> f64 {
    let n = src.valid_count();
    if n == 0 {
        return 0.0;
    }
    if src.depth() != SampleDepth::F32 {
        let (mut s, mut s2) = (0u128, 0u128);
        for v in src.valid_values(band) {
            let v = v as u128;
            s += v;
            s2 += v * v;
        }
        let n = n as u128;
        return (n * s2 - s * s) as f64 / (n * n) as f64;
    }
    let mean = src.valid_values(band).map(|v| v as f64).sum::<f64>() / n as f64;
    src.valid_values(band).map(|v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64
}
