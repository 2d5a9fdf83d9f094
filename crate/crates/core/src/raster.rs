//! In-memory raster model shared by every stage of the pipeline.
//!
//! Samples are stored as `f32` regardless of the declared storage depth; the
//! depth tag constrains the admissible value range and controls quantization
//! whenever a stage writes new values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoMeta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleDepth {
    U8,
    U16,
    F32,
}

impl SampleDepth {
    pub fn max_value(self) -> Option<f32> {
        match self {
            SampleDepth::U8 => Some(255.0),
            SampleDepth::U16 => Some(65535.0),
            SampleDepth::F32 => None,
        }
    }

    /// Round-half-up and clamp a computed value into this depth's range.
    pub fn quantize(self, v: f64) -> f32 {
        match self.max_value() {
            Some(max) => round_half_up(v).clamp(0.0, max as f64) as f32,
            None => v as f32,
        }
    }
}

/// Rounding convention used wherever intensities are quantized.
#[inline]
pub fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Interpolation kernel used by every resampling operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Nearest,
    #[default]
    Bilinear,
    Bicubic,
}

/// Multi-band raster with optional validity mask and georeferencing.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoRaster {
    width: usize,
    height: usize,
    depth: SampleDepth,
    bands: Vec<Vec<f32>>,
    mask: Option<Vec<bool>>,
    fill_value: f32,
    meta: Option<GeoMeta>,
}

impl GeoRaster {
    pub fn new(width: usize, height: usize, depth: SampleDepth, bands: Vec<Vec<f32>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!("dimensions {width}x{height}")));
        }
        if bands.is_empty() {
            return Err(Error::InvalidRaster("raster needs at least one band".into()));
        }
        for (i, band) in bands.iter().enumerate() {
            if band.len() != width * height {
                return Err(Error::InvalidRaster(format!(
                    "band {i} has {} samples, expected {}",
                    band.len(),
                    width * height
                )));
            }
            if let Some(max) = depth.max_value() {
                if let Some(v) = band.iter().find(|v| !(0.0..=max).contains(*v)) {
                    return Err(Error::InvalidRaster(format!("band {i} sample {v} outside [0, {max}]")));
                }
            }
        }
        Ok(Self {
            width,
            height,
            depth,
            bands,
            mask: None,
            fill_value: 0.0,
            meta: None,
        })
    }

    pub fn from_u8(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            SampleDepth::U8,
            vec![data.iter().map(|&v| v as f32).collect()],
        )
    }

    pub fn filled(width: usize, height: usize, depth: SampleDepth, value: f32) -> Result<Self> {
        Self::new(width, height, depth, vec![vec![value; width * height]])
    }

    /// Build an 8-bit single-band raster from a per-pixel function.
    pub fn from_fn_u8(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as f32);
            }
        }
        Self::new(width, height, SampleDepth::U8, vec![data])
    }

    pub fn with_meta(mut self, meta: GeoMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn with_mask(mut self, mask: Vec<bool>, fill_value: f32) -> Result<Self> {
        if mask.len() != self.width * self.height {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} entries for a {}x{} raster",
                mask.len(),
                self.width,
                self.height
            )));
        }
        self.mask = Some(mask);
        self.fill_value = fill_value;
        Ok(self)
    }

    pub fn set_meta(&mut self, meta: Option<GeoMeta>) {
        self.meta = meta;
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn depth(&self) -> SampleDepth {
        self.depth
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn band(&self, i: usize) -> &[f32] {
        &self.bands[i]
    }

    pub fn bands(&self) -> &[Vec<f32>] {
        &self.bands
    }

    pub fn meta(&self) -> Option<&GeoMeta> {
        self.meta.as_ref()
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn fill_value(&self) -> f32 {
        self.fill_value
    }

    #[inline]
    pub fn is_valid(&self, idx: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[idx])
    }

    pub fn valid_count(&self) -> usize {
        match &self.mask {
            Some(m) => m.iter().filter(|v| **v).count(),
            None => self.len(),
        }
    }

    #[inline]
    pub fn get(&self, band: usize, x: usize, y: usize) -> f32 {
        self.bands[band][y * self.width + x]
    }

    /// Values of `band` at valid pixels, in raster order.
    pub fn valid_values(&self, band: usize) -> impl Iterator<Item = f32> + '_ {
        self.bands[band]
            .iter()
            .enumerate()
            .filter(move |(i, _)| self.is_valid(*i))
            .map(|(_, v)| *v)
    }

    pub fn require_u8(&self) -> Result<()> {
        if self.depth == SampleDepth::U8 {
            Ok(())
        } else {
            Err(Error::NonEightBitInput)
        }
    }

    /// First band as bytes. Values are clamped, which is lossless for 8-bit rasters.
    pub fn to_u8(&self) -> Vec<u8> {
        self.bands[0].iter().map(|v| v.clamp(0.0, 255.0) as u8).collect()
    }

    /// Same geometry, mask and metadata with new band data.
    pub fn with_bands(&self, depth: SampleDepth, bands: Vec<Vec<f32>>) -> Result<Self> {
        let mut out = Self::new(self.width, self.height, depth, bands)?;
        out.mask = self.mask.clone();
        out.fill_value = self.fill_value;
        out.meta = self.meta.clone();
        Ok(out)
    }

    /// Apply a per-sample map to every band, keeping masked pixels at the fill value.
    pub(crate) fn map_samples(&self, depth: SampleDepth, f: impl Fn(f32) -> f32) -> Result<Self> {
        let bands = self
            .bands
            .iter()
            .map(|b| {
                b.iter()
                    .enumerate()
                    .map(|(i, &v)| if self.is_valid(i) { f(v) } else { self.fill_value })
                    .collect()
            })
            .collect();
        self.with_bands(depth, bands)
    }

    pub fn extract_band(&self, band: usize) -> Result<Self> {
        if band >= self.bands.len() {
            return Err(Error::InvalidRaster(format!(
                "band {band} requested from a {}-band raster",
                self.bands.len()
            )));
        }
        self.with_bands(self.depth, vec![self.bands[band].clone()])
    }
}

/// Sample a row-major grid at fractional index coordinates (pixel centers on
/// integers), replicating edge pixels outside the grid.
pub fn sample(data: &[f32], width: usize, height: usize, x: f64, y: f64, kernel: Kernel) -> f64 {
    let at = |xi: isize, yi: isize| -> f64 {
        let xc = xi.clamp(0, width as isize - 1) as usize;
        let yc = yi.clamp(0, height as isize - 1) as usize;
        data[yc * width + xc] as f64
    };
    match kernel {
        Kernel::Nearest => at(round_half_up(x) as isize, round_half_up(y) as isize),
        Kernel::Bilinear => {
            let x0 = x.floor();
            let y0 = y.floor();
            let fx = x - x0;
            let fy = y - y0;
            let (xi, yi) = (x0 as isize, y0 as isize);
            let top = at(xi, yi) * (1.0 - fx) + at(xi + 1, yi) * fx;
            let bottom = at(xi, yi + 1) * (1.0 - fx) + at(xi + 1, yi + 1) * fx;
            top * (1.0 - fy) + bottom * fy
        }
        Kernel::Bicubic => {
            let x0 = x.floor();
            let y0 = y.floor();
            let wx = cubic_weights(x - x0);
            let wy = cubic_weights(y - y0);
            let (xi, yi) = (x0 as isize, y0 as isize);
            let mut acc = 0.0;
            for (j, wyj) in wy.iter().enumerate() {
                let mut row = 0.0;
                for (i, wxi) in wx.iter().enumerate() {
                    row += wxi * at(xi + i as isize - 1, yi + j as isize - 1);
                }
                acc += wyj * row;
            }
            acc
        }
    }
}

// Keys cubic convolution, a = -0.5.
fn cubic_weights(t: f64) -> [f64; 4] {
    const A: f64 = -0.5;
    let k = |d: f64| {
        let d = d.abs();
        if d <= 1.0 {
            (A + 2.0) * d * d * d - (A + 3.0) * d * d + 1.0
        } else if d < 2.0 {
            A * d * d * d - 5.0 * A * d * d + 8.0 * A * d - 4.0 * A
        } else {
            0.0
        }
    };
    [k(1.0 + t), k(t), k(1.0 - t), k(2.0 - t)]
}
