//! Synthetic crater-field pairs with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ControlPointSet;
use crate::error::{invalid_param, Result};
use crate::geo::{GeoMeta, Projection};
use crate::matching::Homography;
use crate::raster::{GeoRaster, SampleDepth};

type Pt = (f64, f64);

/// Texture octaves as (wavelength px, height amplitude px).
const TEXTURE_OCTAVES: [(f64, f64); 4] = [(48.0, 3.0), (24.0, 1.6), (12.0, 0.8), (6.0, 0.35)];
const REFERENCE_ORIGIN: Pt = (100_000.0, 50_000.0);

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadiometricMode {
    #[default]
    None,
    Gamma {
        gamma: f64,
    },
    Invert,
    GammaInvert {
        gamma: f64,
    },
}

impl RadiometricMode {
    /// Maps a gray level in `[0, 255]`.
    pub fn apply(self, v: f64) -> f64 {
        let gamma = |v: f64, g: f64| 255.0 * (v.clamp(0.0, 255.0) / 255.0).powf(g);
        match self {
            RadiometricMode::None => v,
            RadiometricMode::Gamma { gamma: g } => gamma(v, g),
            RadiometricMode::Invert => 255.0 - v,
            RadiometricMode::GammaInvert { gamma: g } => 255.0 - gamma(v, g),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    /// Edge length of both images, pixels.
    pub size: usize,
    pub crater_count: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Clockwise from image up, degrees.
    pub sun_azimuth_deg: f64,
    pub sun_elevation_deg: f64,
    /// Standard deviation of the additive Gaussian noise, gray levels.
    pub noise_sigma: f64,
    pub radiometric_mode: RadiometricMode,
    /// Source pixel → reference pixel.
    pub h_true: Homography,
    /// Reference ground sampling distance, meters.
    pub gsd: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            size: 512,
            crater_count: 40,
            radius_min: 6.0,
            radius_max: 30.0,
            sun_azimuth_deg: 135.0,
            sun_elevation_deg: 30.0,
            noise_sigma: 2.0,
            radiometric_mode: RadiometricMode::None,
            h_true: Homography::identity(),
            gsd: 1.0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        if self.size < 32 {
            return Err(invalid_param("size", "must be at least 32"));
        }
        if !(self.radius_min > 0.0 && self.radius_max >= self.radius_min) {
            return Err(invalid_param("radius_min", "need 0 < radius_min <= radius_max"));
        }
        if !(2.0 * self.radius_max + 2.0 < self.size as f64) {
            return Err(invalid_param("radius_max", "craters must fit inside the canvas"));
        }
        if !(self.sun_elevation_deg > 0.0 && self.sun_elevation_deg <= 90.0) {
            return Err(invalid_param("sun_elevation_deg", "must lie in (0, 90]"));
        }
        if !self.sun_azimuth_deg.is_finite() {
            return Err(invalid_param("sun_azimuth_deg", "must be finite"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid_param("noise_sigma", "must be non-negative"));
        }
        if let RadiometricMode::Gamma { gamma } | RadiometricMode::GammaInvert { gamma } = self.radiometric_mode {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(invalid_param("gamma", "must be positive"));
            }
        }
        if !(self.gsd > 0.0 && self.gsd.is_finite()) {
            return Err(invalid_param("gsd", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    /// Georeferenced reference image.
    pub reference: GeoRaster,
    pub source: GeoRaster,
    pub h_true: Homography,
    /// Crater centers as `(source, reference)` pixel positions, for craters
    /// visible in both images.
    pub truth: Vec<(Pt, Pt)>,
}

impl SyntheticPair {
    /// Truth craters scored against `h`: reference position paired with the
    /// source position mapped through `h`.
    pub fn control_points(&self, h: &Homography) -> ControlPointSet {
        ControlPointSet::new(self.truth.iter().map(|&(s, r)| (r, h.apply(s.0, s.1))).collect())
    }
}

#[derive(Debug, Clone, Copy)]
struct Crater {
    cx: f64,
    cy: f64,
    radius: f64,
}

impl Crater {
    /// Bowl with a raised rim and an exponentially decaying ejecta apron.
    fn height(&self, x: f64, y: f64) -> f64 {
        let rho = ((x - self.cx).powi(2) + (y - self.cy).powi(2)).sqrt() / self.radius;
        if rho >= 4.0 {
            return 0.0;
        }
        let depth = 0.2 * self.radius;
        let rim = 0.05 * self.radius;
        if rho < 1.0 {
            -depth + (depth + rim) * rho * rho
        } else {
            rim * (-3.0 * (rho - 1.0)).exp()
        }
    }

    fn albedo(&self, x: f64, y: f64) -> f64 {
        let rho = ((x - self.cx).powi(2) + (y - self.cy).powi(2)).sqrt() / self.radius;
        let t = ((rho - 0.5) / 0.3).clamp(0.0, 1.0);
        0.75 + 0.25 * t * t * (3.0 - 2.0 * t)
    }
}

fn hash2(ix: i64, iy: i64, salt: u64) -> f64 {
    let mut z =
        salt ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// Lattice value noise with quintic fade, in `[-1, 1]`.
fn value_noise(x: f64, y: f64, salt: u64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (tx, ty) = (x - fx, y - fy);
    let fade = |t: f64| t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
    let (u, v) = (fade(tx), fade(ty));
    let (ix, iy) = (fx as i64, fy as i64);
    let a = hash2(ix, iy, salt);
    let b = hash2(ix + 1, iy, salt);
    let c = hash2(ix, iy + 1, salt);
    let d = hash2(ix + 1, iy + 1, salt);
    let top = a + (b - a) * u;
    let bottom = c + (d - c) * u;
    top + (bottom - top) * v
}

struct Scene {
    craters: Vec<Crater>,
    salt: u64,
    light: [f64; 3],
}

impl Scene {
    fn height(&self, x: f64, y: f64) -> f64 {
        let texture: f64 = TEXTURE_OCTAVES
            .iter()
            .enumerate()
            .map(|(k, &(wl, amp))| amp * value_noise(x / wl, y / wl, self.salt.wrapping_add(k as u64)))
            .sum();
        texture + self.craters.iter().map(|c| c.height(x, y)).sum::<f64>()
    }

    /// Lambertian shading of the height field, gray levels.
    fn radiance(&self, x: f64, y: f64) -> f64 {
        const STEP: f64 = 0.25;
        let hx = (self.height(x + STEP, y) - self.height(x - STEP, y)) / (2.0 * STEP);
        let hy = (self.height(x, y + STEP) - self.height(x, y - STEP)) / (2.0 * STEP);
        let norm = (hx * hx + hy * hy + 1.0).sqrt();
        let lambert = ((-hx * self.light[0] - hy * self.light[1] + self.light[2]) / norm).max(0.0);
        let albedo: f64 = self.craters.iter().map(|c| c.albedo(x, y)).product();
        (255.0 * albedo * (0.1 + 0.9 * lambert)).clamp(0.0, 255.0)
    }
}

fn render(
    scene: &Scene,
    size: usize,
    map: impl Fn(f64, f64) -> Pt + Sync,
    remap: RadiometricMode,
    noise: &[f64],
) -> Vec<f32> {
    use rayon::prelude::*;
    (0..size * size)
        .into_par_iter()
        .map(|i| {
            let (x, y) = map((i % size) as f64, (i / size) as f64);
            let v = remap.apply(scene.radiance(x, y)) + noise[i];
            SampleDepth::U8.quantize(v)
        })
        .collect()
}

fn gaussian_field(seed: u64, stream: u64, sigma: f64, n: usize) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

/// Renders a shaded crater field as the reference and the same terrain seen
/// through `h_true` (source pixel → reference pixel) as the source, with
/// independent noise on each and the radiometric remap applied to the source.
pub fn generate_synthetic_pair(seed: u64, params: &SceneParams) -> Result<SyntheticPair> {
    params.validate()?;
    let size = params.size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let craters: Vec<Crater> = (0..params.crater_count)
        .map(|_| {
            let radius = if params.radius_max > params.radius_min {
                rng.random_range(params.radius_min..params.radius_max)
            } else {
                params.radius_min
            };
            let hi = size as f64 - 1.0 - radius;
            Crater {
                cx: rng.random_range(radius..hi),
                cy: rng.random_range(radius..hi),
                radius,
            }
        })
        .collect();
    let (az, el) = (
        params.sun_azimuth_deg.to_radians(),
        params.sun_elevation_deg.to_radians(),
    );
    let scene = Scene {
        craters,
        salt: rng.random(),
        light: [el.cos() * az.sin(), -el.cos() * az.cos(), el.sin()],
    };

    let n = size * size;
    let ref_noise = gaussian_field(seed, 1, params.noise_sigma, n);
    let src_noise = gaussian_field(seed, 2, params.noise_sigma, n);
    let h = params.h_true;
    let reference = render(&scene, size, |x, y| (x, y), RadiometricMode::None, &ref_noise);
    let source = render(&scene, size, |x, y| h.apply(x, y), params.radiometric_mode, &src_noise);

    let meta = GeoMeta::north_up(Projection::Equirectangular, REFERENCE_ORIGIN, params.gsd)?;
    let reference = GeoRaster::new(size, size, SampleDepth::U8, vec![reference])?.with_meta(meta);
    let source = GeoRaster::new(size, size, SampleDepth::U8, vec![source])?;

    let h_inv = h.inverse()?;
    let limit = size as f64 - 1.0;
    let inside = |p: Pt| p.0 >= 0.0 && p.1 >= 0.0 && p.0 <= limit && p.1 <= limit;
    let truth = scene
        .craters
        .iter()
        .map(|c| (h_inv.apply(c.cx, c.cy), (c.cx, c.cy)))
        .filter(|&(s, r)| inside(s) && inside(r))
        .collect();
    Ok(SyntheticPair {
        reference,
        source,
        h_true: h,
        truth,
    })
}
