//! Perspective warping into the reference frame, compositing, and geographic
//! coordinate integration of the warped product.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{reproject_to_frame, GeoMeta};
use crate::matching::Homography;
use crate::raster::{sample, GeoRaster, Kernel};

/// Checker cell edge for [`CompositeMode::Checker`], pixels.
pub const CHECKER_CELL: i64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct WarpResult {
    /// Warped pixels with a validity mask; carries no geo metadata.
    pub image: GeoRaster,
    /// Reference-frame pixel position of the canvas's top-left pixel.
    pub origin_offset: (i64, i64),
    /// Exact bounding box of the mapped source corners: `(min_x, min_y, max_x, max_y)`.
    pub footprint: (f64, f64, f64, f64),
    /// Geo metadata of the source before warping, if it had any.
    pub source_meta: Option<GeoMeta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositeMode {
    #[default]
    Overlay,
    Blend,
    Checker,
}

fn corners(w: usize, h: usize) -> [(f64, f64); 4] {
    let (x1, y1) = (w as f64 - 1.0, h as f64 - 1.0);
    [(0.0, 0.0), (x1, 0.0), (x1, y1), (0.0, y1)]
}

/// Warp `src` through `h` (source → reference pixel coordinates) onto a canvas
/// covering the whole mapped footprint.
pub fn warp_perspective(src: &GeoRaster, h: &Homography, kernel: Kernel) -> Result<WarpResult> {
    let mapped: Vec<(f64, f64)> = corners(src.width(), src.height())
        .iter()
        .map(|&(x, y)| h.apply(x, y))
        .collect();
    if mapped.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::NonInvertibleHomography);
    }
    let min_x = mapped.iter().map(|p| p.0).fold(f64::MAX, f64::min);
    let min_y = mapped.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    let max_x = mapped.iter().map(|p| p.0).fold(f64::MIN, f64::max);
    let max_y = mapped.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    // Snap within a hair of an integer so exact integer maps keep their size.
    let snap = |v: f64, up: bool| {
        let r = v.round();
        if (v - r).abs() < 1e-9 {
            r
        } else if up {
            v.ceil()
        } else {
            v.floor()
        }
    };
    let (x0, y0) = (snap(min_x, false), snap(min_y, false));
    let (x1, y1) = (snap(max_x, true), snap(max_y, true));
    let width = (x1 - x0) as usize + 1;
    let height = (y1 - y0) as usize + 1;
    let mut out = warp_onto(src, h, kernel, (x0 as i64, y0 as i64), width, height)?;
    out.footprint = (min_x, min_y, max_x, max_y);
    Ok(out)
}

/// Warp onto a fixed `width × height` canvas whose top-left pixel sits at
/// `offset` in the reference frame; `offset = (0, 0)` with the reference size crops to it.
pub fn warp_onto(
    src: &GeoRaster,
    h: &Homography,
    kernel: Kernel,
    offset: (i64, i64),
    width: usize,
    height: usize,
) -> Result<WarpResult> {
    let inv = h.inverse()?;
    let (sw, sh) = (src.width() as f64, src.height() as f64);
    let depth = src.depth();
    let bands = src.band_count();
    let rows: Vec<(Vec<Vec<f32>>, Vec<bool>)> = (0..height)
        .into_par_iter()
        .map(|row| {
            let mut vals = vec![vec![0.0f32; width]; bands];
            let mut valid = vec![false; width];
            for col in 0..width {
                let (x, y) = ((col as i64 + offset.0) as f64, (row as i64 + offset.1) as f64);
                let (sx, sy) = inv.apply(x, y);
                if !(sx >= -0.5 && sy >= -0.5 && sx <= sw - 0.5 && sy <= sh - 0.5) {
                    continue;
                }
                let nearest = ((sy + 0.5).floor().min(sh - 1.0) as usize) * src.width()
                    + (sx + 0.5).floor().min(sw - 1.0) as usize;
                if !src.is_valid(nearest) {
                    continue;
                }
                valid[col] = true;
                for (b, out) in vals.iter_mut().enumerate() {
                    out[col] = depth.quantize(sample(src.band(b), src.width(), src.height(), sx, sy, kernel));
                }
            }
            (vals, valid)
        })
        .collect();
    let mut out_bands = vec![Vec::with_capacity(width * height); bands];
    let mut mask = Vec::with_capacity(width * height);
    for (vals, valid) in rows {
        for (dst, v) in out_bands.iter_mut().zip(vals) {
            dst.extend(v);
        }
        mask.extend(valid);
    }
    let image = GeoRaster::new(width, height, depth, out_bands)?.with_mask(mask, 0.0)?;
    Ok(WarpResult {
        image,
        origin_offset: offset,
        footprint: (
            offset.0 as f64,
            offset.1 as f64,
            (offset.0 + width as i64 - 1) as f64,
            (offset.1 + height as i64 - 1) as f64,
        ),
        source_meta: src.meta().cloned(),
    })
}

/// Reference at `(0, 0)` and the warped canvas at its offset, on the union of
/// both extents. Returns the composite and its top-left position in the
/// reference frame.
pub fn composite(warped: &WarpResult, reference: &GeoRaster, mode: CompositeMode) -> Result<(GeoRaster, (i64, i64))> {
    let img = &warped.image;
    if img.band_count() != reference.band_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} warped bands vs {} reference bands",
            img.band_count(),
            reference.band_count()
        )));
    }
    let (ox, oy) = warped.origin_offset;
    let (rw, rh) = (reference.width() as i64, reference.height() as i64);
    let (ww, wh) = (img.width() as i64, img.height() as i64);
    let x0 = ox.min(0);
    let y0 = oy.min(0);
    let x1 = (ox + ww).max(rw);
    let y1 = (oy + wh).max(rh);
    let (cw, ch) = ((x1 - x0) as usize, (y1 - y0) as usize);

    let mut bands = vec![vec![0.0f32; cw * ch]; reference.band_count()];
    let mut mask = vec![false; cw * ch];
    for cy in 0..ch {
        let gy = cy as i64 + y0;
        for cx in 0..cw {
            let gx = cx as i64 + x0;
            let ref_idx = (gx >= 0 && gy >= 0 && gx < rw && gy < rh)
                .then(|| (gy * rw + gx) as usize)
                .filter(|&i| reference.is_valid(i));
            let (wx, wy) = (gx - ox, gy - oy);
            let warp_idx = (wx >= 0 && wy >= 0 && wx < ww && wy < wh)
                .then(|| (wy * ww + wx) as usize)
                .filter(|&i| img.is_valid(i));
            let i = cy * cw + cx;
            let pick = |b: usize| -> Option<f32> {
                let r = ref_idx.map(|k| reference.band(b)[k]);
                let w = warp_idx.map(|k| img.band(b)[k]);
                match (r, w) {
                    (None, None) => None,
                    (Some(r), None) => Some(r),
                    (None, Some(w)) => Some(w),
                    (Some(r), Some(w)) => Some(match mode {
                        CompositeMode::Overlay => w,
                        CompositeMode::Blend => reference.depth().quantize((r as f64 + w as f64) / 2.0),
                        CompositeMode::Checker => {
                            if (gx.div_euclid(CHECKER_CELL) + gy.div_euclid(CHECKER_CELL)).rem_euclid(2) == 0 {
                                r
                            } else {
                                w
                            }
                        }
                    }),
                }
            };
            for (b, band) in bands.iter_mut().enumerate() {
                if let Some(v) = pick(b) {
                    band[i] = v;
                    mask[i] = true;
                }
            }
        }
    }
    let out = GeoRaster::new(cw, ch, reference.depth(), bands)?.with_mask(mask, 0.0)?;
    Ok((out, (x0, y0)))
}

/// Geotransform for the warped canvas: the reference geotransform shifted by
/// the canvas offset.
pub fn integrated_meta(offset: (i64, i64), ref_meta: &GeoMeta) -> Result<GeoMeta> {
    ref_meta.validate()?;
    let gt = ref_meta.geotransform;
    let (dx, dy) = (offset.0 as f64, offset.1 as f64);
    let mut meta = ref_meta.clone();
    meta.geotransform[0] = gt[0] + dx * gt[1] + dy * gt[2];
    meta.geotransform[3] = gt[3] + dx * gt[4] + dy * gt[5];
    Ok(meta)
}

/// Attach reference-frame georeferencing to a warped canvas. With
/// `restore_source_crs`, the result is then reprojected into the source's
/// original projection at the reference ground sampling distance.
pub fn integrate_coordinates(warped: &WarpResult, ref_meta: &GeoMeta, restore_source_crs: bool) -> Result<GeoRaster> {
    let meta = integrated_meta(warped.origin_offset, ref_meta)?;
    let placed = warped.image.clone().with_meta(meta.clone());
    if !restore_source_crs {
        return Ok(placed);
    }
    let source = warped.source_meta.as_ref().ok_or(Error::MissingGeoMeta)?;
    reproject_to_frame(
        &placed,
        source.projection,
        source.standard_parallel_deg,
        meta.gsd,
        Kernel::Bilinear,
        placed.fill_value(),
    )
}
