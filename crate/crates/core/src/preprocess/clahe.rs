//! Contrast-limited adaptive histogram equalization.

use crate::error::{invalid_param, Error, Result};
use crate::raster::{round_half_up, GeoRaster, SampleDepth};

pub const DEFAULT_TILES: usize = 8;
pub const DEFAULT_CLIP_LIMIT: f64 = 2.0;

/// Equalization mapping for one histogram.
///
/// `out(v) = round(255 * (cdf(v) - cdf_min) / (n - cdf_min))` where `cdf_min`
/// is the first non-zero cumulative count. A histogram with a single occupied
/// bin has nothing to equalize and maps to the identity.
pub fn equalization_lut(hist: &[u64; 256]) -> [f64; 256] {
    let n: u64 = hist.iter().sum();
    let occupied = hist.iter().filter(|&&c| c > 0).count();
    let mut lut = [0.0; 256];
    if occupied <= 1 {
        for (v, l) in lut.iter_mut().enumerate() {
            *l = v as f64;
        }
        return lut;
    }
    let cdf_min = *hist.iter().find(|&&c| c > 0).expect("at least two occupied bins");
    let mut cdf = 0u64;
    for (v, &c) in hist.iter().enumerate() {
        cdf += c;
        lut[v] = if cdf == 0 {
            0.0
        } else {
            round_half_up(255.0 * (cdf - cdf_min) as f64 / (n - cdf_min) as f64)
        };
    }
    lut
}

/// Clip bins above `limit` and spread the excess: an equal share to every bin,
/// the remainder one count at a time at evenly strided bins.
fn clip_histogram(hist: &mut [u64; 256], limit: u64) {
    let mut excess = 0u64;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let share = excess / 256;
    let residual = (excess % 256) as usize;
    for h in hist.iter_mut() {
        *h += share;
    }
    if residual > 0 {
        let stride = (256 / residual).max(1);
        for i in (0..256).step_by(stride).take(residual) {
            hist[i] += 1;
        }
    }
}

fn tile_bounds(n: usize, tiles: usize, t: usize) -> (usize, usize) {
    (t * n / tiles, (t + 1) * n / tiles)
}

/// CLAHE over a `tiles_x` × `tiles_y` grid. `clip_limit` is a multiple of the
/// uniform bin height `tile_pixels / 256`. Output pixels blend the mappings of
/// the four nearest tile centers bilinearly.
pub fn clahe(src: &GeoRaster, tiles_x: usize, tiles_y: usize, clip_limit: f64) -> Result<GeoRaster> {
    src.require_u8()?;
    if tiles_x == 0 || tiles_y == 0 {
        return Err(invalid_param("tiles", "must be at least 1"));
    }
    if !(clip_limit >= 1.0) {
        return Err(invalid_param("clip_limit", "must be at least 1.0"));
    }
    let (w, h) = (src.width(), src.height());
    if w < tiles_x || h < tiles_y {
        return Err(Error::TileGridTooFine {
            tiles_x,
            tiles_y,
            width: w,
            height: h,
        });
    }

    let bands = (0..src.band_count())
        .map(|b| {
            let data = src.band(b);
            let mut luts = Vec::with_capacity(tiles_x * tiles_y);
            let mut centers_x = Vec::with_capacity(tiles_x);
            let mut centers_y = Vec::with_capacity(tiles_y);
            for tx in 0..tiles_x {
                let (x0, x1) = tile_bounds(w, tiles_x, tx);
                centers_x.push((x0 + x1) as f64 / 2.0 - 0.5);
            }
            for ty in 0..tiles_y {
                let (y0, y1) = tile_bounds(h, tiles_y, ty);
                centers_y.push((y0 + y1) as f64 / 2.0 - 0.5);
                for tx in 0..tiles_x {
                    let (x0, x1) = tile_bounds(w, tiles_x, tx);
                    let mut hist = [0u64; 256];
                    for y in y0..y1 {
                        for x in x0..x1 {
                            let i = y * w + x;
                            if src.is_valid(i) {
                                hist[data[i] as usize] += 1;
                            }
                        }
                    }
                    let n: u64 = hist.iter().sum();
                    let single_bin = hist.iter().filter(|&&c| c > 0).count() <= 1;
                    if !single_bin {
                        let limit = ((clip_limit * n as f64 / 256.0) as u64).max(1);
                        clip_histogram(&mut hist, limit);
                    }
                    luts.push(equalization_lut(&hist));
                }
            }

            // Neighbouring tile indices and weights along one axis.
            let axis = |p: f64, centers: &[f64]| -> (usize, usize, f64) {
                if p <= centers[0] {
                    return (0, 0, 0.0);
                }
                let last = centers.len() - 1;
                if p >= centers[last] {
                    return (last, last, 0.0);
                }
                let i = centers.partition_point(|c| *c <= p) - 1;
                (i, i + 1, (p - centers[i]) / (centers[i + 1] - centers[i]))
            };

            let mut out = vec![0.0f32; w * h];
            for y in 0..h {
                let (ty0, ty1, fy) = axis(y as f64, &centers_y);
                for x in 0..w {
                    let i = y * w + x;
                    if !src.is_valid(i) {
                        out[i] = src.fill_value();
                        continue;
                    }
                    let (tx0, tx1, fx) = axis(x as f64, &centers_x);
                    let v = data[i] as usize;
                    let m = |ty: usize, tx: usize| luts[ty * tiles_x + tx][v];
                    let top = m(ty0, tx0) * (1.0 - fx) + m(ty0, tx1) * fx;
                    let bottom = m(ty1, tx0) * (1.0 - fx) + m(ty1, tx1) * fx;
                    out[i] = SampleDepth::U8.quantize(top * (1.0 - fy) + bottom * fy);
                }
            }
            out
        })
        .collect();
    src.with_bands(SampleDepth::U8, bands)
}
