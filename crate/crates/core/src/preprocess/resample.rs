use rayon::prelude::*;

use crate::error::{invalid_param, Error, Result};
use crate::raster::{round_half_up, sample, GeoRaster, Kernel};

/// Resample to `target_gsd` meters/pixel. The source GSD comes from the
/// raster's metadata, or from `source_gsd` for plain images.
///
/// Output pixel centers keep their world positions: output index `i` samples
/// source index `(i + 0.5) * target_gsd / source_gsd - 0.5`.
pub fn resample(src: &GeoRaster, target_gsd: f64, kernel: Kernel, source_gsd: Option<f64>) -> Result<GeoRaster> {
    let src_gsd = source_gsd
        .or_else(|| src.meta().map(|m| m.gsd))
        .ok_or(Error::UnknownSourceGsd)?;
    if !(src_gsd > 0.0) {
        return Err(invalid_param("source_gsd", "must be positive"));
    }
    if !(target_gsd > 0.0) {
        return Err(invalid_param("target_gsd", "must be positive"));
    }
    let factor = src_gsd / target_gsd;
    let out_dim = |n: usize| (round_half_up(n as f64 * factor) as usize).max(1);
    let (out_w, out_h) = (out_dim(src.width()), out_dim(src.height()));
    let step = target_gsd / src_gsd;

    let depth = src.depth();
    let bands = src
        .bands()
        .iter()
        .map(|band| {
            (0..out_h)
                .into_par_iter()
                .flat_map_iter(|y| {
                    let sy = (y as f64 + 0.5) * step - 0.5;
                    (0..out_w).map(move |x| {
                        let sx = (x as f64 + 0.5) * step - 0.5;
                        depth.quantize(sample(band, src.width(), src.height(), sx, sy, kernel))
                    })
                })
                .collect::<Vec<f32>>()
        })
        .collect();

    let mut out = GeoRaster::new(out_w, out_h, depth, bands)?;
    if let Some(mask) = src.mask() {
        let mut m = Vec::with_capacity(out_w * out_h);
        for y in 0..out_h {
            let sy = (round_half_up((y as f64 + 0.5) * step - 0.5).max(0.0) as usize).min(src.height() - 1);
            for x in 0..out_w {
                let sx = (round_half_up((x as f64 + 0.5) * step - 0.5).max(0.0) as usize).min(src.width() - 1);
                m.push(mask[sy * src.width() + sx]);
            }
        }
        out = out.with_mask(m, src.fill_value())?;
    }
    if let Some(meta) = src.meta() {
        let mut meta = meta.clone();
        for i in [1, 2, 4, 5] {
            meta.geotransform[i] *= step;
        }
        meta.gsd = target_gsd;
        out = out.with_meta(meta);
    }
    Ok(out)
}
