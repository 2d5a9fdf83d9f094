use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Result};
use crate::raster::{GeoRaster, SampleDepth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructuringElement {
    #[default]
    Square,
    Disk,
}

/// Grayscale dilation: each output pixel is the maximum over the structuring
/// element centred on it. Borders replicate edge pixels.
pub fn dilate(src: &GeoRaster, radius: usize, shape: StructuringElement) -> Result<GeoRaster> {
    src.require_u8()?;
    if radius == 0 {
        return Err(invalid_param("radius", "must be at least 1"));
    }
    let (w, h) = (src.width(), src.height());
    let r = radius as isize;
    let bands = src
        .bands()
        .iter()
        .map(|band| match shape {
            StructuringElement::Square => {
                // Separable: row maxima, then column maxima.
                let mut rows = vec![0.0f32; w * h];
                for y in 0..h {
                    for x in 0..w {
                        let lo = (x as isize - r).max(0) as usize;
                        let hi = (x as isize + r).min(w as isize - 1) as usize;
                        rows[y * w + x] = band[y * w + lo..=y * w + hi].iter().cloned().fold(f32::MIN, f32::max);
                    }
                }
                let mut out = vec![0.0f32; w * h];
                for y in 0..h {
                    let lo = (y as isize - r).max(0) as usize;
                    let hi = (y as isize + r).min(h as isize - 1) as usize;
                    for x in 0..w {
                        out[y * w + x] = (lo..=hi).map(|yy| rows[yy * w + x]).fold(f32::MIN, f32::max);
                    }
                }
                out
            }
            StructuringElement::Disk => {
                let offsets: Vec<(isize, isize)> = (-r..=r)
                    .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
                    .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
                    .collect();
                let mut out = vec![0.0f32; w * h];
                for y in 0..h as isize {
                    for x in 0..w as isize {
                        out[y as usize * w + x as usize] = offsets
                            .iter()
                            .map(|(dx, dy)| {
                                let xx = (x + dx).clamp(0, w as isize - 1) as usize;
                                let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                                band[yy * w + xx]
                            })
                            .fold(f32::MIN, f32::max);
                    }
                }
                out
            }
        })
        .collect();
    src.with_bands(SampleDepth::U8, bands)
}
