//! Georeferencing: affine geotransforms, spherical lunar map projections and
//! raster reprojection.
//!
//! Geotransforms follow the six-coefficient convention
//! `x = gt[0] + col * gt[1] + row * gt[2]`, `y = gt[3] + col * gt[4] + row * gt[5]`,
//! where `(col, row) = (0, 0)` is the top-left corner of the top-left pixel.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};
use crate::raster::{sample, GeoRaster, Kernel};

/// IAU mean lunar radius in meters.
pub const LUNAR_RADIUS_M: f64 = 1_737_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Projection {
    Equirectangular,
    PolarStereographicNorth,
    PolarStereographicSouth,
    /// Unprojected longitude/latitude in degrees.
    Geographic,
}

impl Projection {
    pub fn name(self) -> &'static str {
        match self {
            Projection::Equirectangular => "equirectangular",
            Projection::PolarStereographicNorth => "polar-stereographic-north",
            Projection::PolarStereographicSouth => "polar-stereographic-south",
            Projection::Geographic => "geographic",
        }
    }

    /// Lon/lat in radians to projected coordinates. `None` where the
    /// projection is singular (the opposite pole of a stereographic map).
    pub fn forward(self, lon: f64, lat: f64, radius: f64, std_parallel: f64) -> Option<(f64, f64)> {
        match self {
            Projection::Equirectangular => Some((radius * lon * std_parallel.cos(), radius * lat)),
            Projection::PolarStereographicNorth => {
                if lat <= -FRAC_PI_2 + 1e-12 {
                    return None;
                }
                let rho = 2.0 * radius * (FRAC_PI_4 - lat / 2.0).tan();
                Some((rho * lon.sin(), -rho * lon.cos()))
            }
            Projection::PolarStereographicSouth => {
                if lat >= FRAC_PI_2 - 1e-12 {
                    return None;
                }
                let rho = 2.0 * radius * (FRAC_PI_4 + lat / 2.0).tan();
                Some((rho * lon.sin(), rho * lon.cos()))
            }
            Projection::Geographic => Some((lon.to_degrees(), lat.to_degrees())),
        }
    }

    /// Projected coordinates to lon/lat in radians.
    pub fn inverse(self, x: f64, y: f64, radius: f64, std_parallel: f64) -> Option<(f64, f64)> {
        let (lon, lat) = match self {
            Projection::Equirectangular => (x / (radius * std_parallel.cos()), y / radius),
            Projection::PolarStereographicNorth => {
                let rho = x.hypot(y);
                (x.atan2(-y), FRAC_PI_2 - 2.0 * (rho / (2.0 * radius)).atan())
            }
            Projection::PolarStereographicSouth => {
                let rho = x.hypot(y);
                (x.atan2(y), -FRAC_PI_2 + 2.0 * (rho / (2.0 * radius)).atan())
            }
            Projection::Geographic => (x.to_radians(), y.to_radians()),
        };
        (lat.abs() <= FRAC_PI_2 + 1e-12 && lon.abs() <= 2.0 * PI).then_some((lon, lat))
    }

    fn is_angular(self) -> bool {
        self == Projection::Geographic
    }
}

impl FromStr for Projection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equirectangular" => Ok(Projection::Equirectangular),
            "polar-stereographic-north" => Ok(Projection::PolarStereographicNorth),
            "polar-stereographic-south" => Ok(Projection::PolarStereographicSouth),
            "geographic" => Ok(Projection::Geographic),
            other => Err(Error::UnsupportedProjectionPair(format!(
                "unknown projection `{other}`"
            ))),
        }
    }
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// Projection and geotransform metadata. Serializes to the `.geo.json` sidecar layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoMeta {
    pub projection: Projection,
    #[serde(rename = "sphere_radius_m")]
    pub sphere_radius: f64,
    pub geotransform: [f64; 6],
    #[serde(rename = "gsd_m")]
    pub gsd: f64,
    /// Standard parallel of the equirectangular projection, degrees.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub standard_parallel_deg: f64,
}

impl GeoMeta {
    pub fn new(projection: Projection, sphere_radius: f64, geotransform: [f64; 6], gsd: f64) -> Result<Self> {
        let meta = Self {
            projection,
            sphere_radius,
            geotransform,
            gsd,
            standard_parallel_deg: 0.0,
        };
        meta.validate()?;
        Ok(meta)
    }

    /// North-up grid with square pixels of `gsd` meters whose top-left corner is `origin`.
    pub fn north_up(projection: Projection, origin: (f64, f64), gsd: f64) -> Result<Self> {
        let size = if projection.is_angular() {
            gsd / meters_per_degree(LUNAR_RADIUS_M)
        } else {
            gsd
        };
        Self::new(
            projection,
            LUNAR_RADIUS_M,
            [origin.0, size, 0.0, origin.1, 0.0, -size],
            gsd,
        )
    }

    pub fn with_standard_parallel(mut self, degrees: f64) -> Self {
        self.standard_parallel_deg = degrees;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let gt = &self.geotransform;
        if gt.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGeoMeta("non-finite geotransform".into()));
        }
        if gt[1] == 0.0 || gt[5] == 0.0 {
            return Err(Error::InvalidGeoMeta("pixel sizes must be non-zero".into()));
        }
        if !(self.sphere_radius > 0.0) {
            return Err(Error::InvalidGeoMeta("sphere radius must be positive".into()));
        }
        if !(self.gsd > 0.0) {
            return Err(Error::InvalidGeoMeta("gsd must be positive".into()));
        }
        let expected = if self.projection.is_angular() {
            gt[1].abs() * meters_per_degree(self.sphere_radius)
        } else {
            gt[1].abs()
        };
        if (expected - self.gsd).abs() > 1e-6 * self.gsd {
            return Err(Error::InvalidGeoMeta(format!(
                "gsd {} inconsistent with pixel size {}",
                self.gsd, gt[1]
            )));
        }
        Ok(())
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.geotransform[0], self.geotransform[3])
    }

    pub fn pixel_size(&self) -> (f64, f64) {
        (self.geotransform[1], self.geotransform[5])
    }

    fn std_parallel_rad(&self) -> f64 {
        self.standard_parallel_deg.to_radians()
    }

    /// Lon/lat (radians) of a projected coordinate in this frame.
    pub fn world_to_lonlat(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        self.projection
            .inverse(x, y, self.sphere_radius, self.std_parallel_rad())
    }

    pub fn lonlat_to_world(&self, lon: f64, lat: f64) -> Option<(f64, f64)> {
        self.projection
            .forward(lon, lat, self.sphere_radius, self.std_parallel_rad())
    }

    fn same_frame(&self, other: &GeoMeta) -> bool {
        self.projection == other.projection
            && self.sphere_radius == other.sphere_radius
            && self.standard_parallel_deg == other.standard_parallel_deg
    }
}

fn meters_per_degree(radius: f64) -> f64 {
    radius * PI / 180.0
}

pub fn pixel_to_world(meta: &GeoMeta, col: f64, row: f64) -> (f64, f64) {
    let gt = &meta.geotransform;
    (gt[0] + col * gt[1] + row * gt[2], gt[3] + col * gt[4] + row * gt[5])
}

pub fn world_to_pixel(meta: &GeoMeta, x: f64, y: f64) -> Result<(f64, f64)> {
    let gt = &meta.geotransform;
    let det = gt[1] * gt[5] - gt[2] * gt[4];
    if det == 0.0 || !det.is_finite() {
        return Err(Error::SingularGeotransform(det));
    }
    let dx = x - gt[0];
    let dy = y - gt[3];
    Ok(((gt[5] * dx - gt[2] * dy) / det, (gt[1] * dy - gt[4] * dx) / det))
}

/// Reproject with the default fill value 0. See [`reproject_with_fill`].
pub fn reproject(src: &GeoRaster, target: Projection, target_gsd: f64, kernel: Kernel) -> Result<GeoRaster> {
    reproject_with_fill(src, target, target_gsd, kernel, 0.0)
}

/// Resample `src` onto a north-up grid in `target` projection with square
/// pixels of `target_gsd` meters. Output pixels whose preimage falls outside
/// the source footprint take `fill_value` and are cleared in the output mask.
pub fn reproject_with_fill(
    src: &GeoRaster,
    target: Projection,
    target_gsd: f64,
    kernel: Kernel,
    fill_value: f32,
) -> Result<GeoRaster> {
    let src_meta = src.meta().ok_or(Error::MissingGeoMeta)?;
    reproject_to_frame(
        src,
        target,
        src_meta.standard_parallel_deg,
        target_gsd,
        kernel,
        fill_value,
    )
}

/// Like [`reproject_with_fill`] with an explicit standard parallel for the target frame.
pub fn reproject_to_frame(
    src: &GeoRaster,
    target: Projection,
    standard_parallel_deg: f64,
    target_gsd: f64,
    kernel: Kernel,
    fill_value: f32,
) -> Result<GeoRaster> {
    let src_meta = src.meta().ok_or(Error::MissingGeoMeta)?;
    src_meta.validate()?;
    if !(target_gsd > 0.0) {
        return Err(invalid_param("target_gsd", "must be positive"));
    }
    let mut dst_meta = GeoMeta {
        projection: target,
        sphere_radius: src_meta.sphere_radius,
        geotransform: [0.0; 6],
        gsd: target_gsd,
        standard_parallel_deg,
    };
    let px = if target.is_angular() {
        target_gsd / meters_per_degree(src_meta.sphere_radius)
    } else {
        target_gsd
    };
    let same_frame = src_meta.same_frame(&dst_meta);

    // Footprint: source boundary densely plus a coarse interior lattice.
    let (w, h) = (src.width() as f64, src.height() as f64);
    let mut probes = Vec::new();
    let edge_steps = (src.width().max(src.height())).max(16);
    for i in 0..=edge_steps {
        let t = i as f64 / edge_steps as f64;
        probes.extend([(t * w, 0.0), (t * w, h), (0.0, t * h), (w, t * h)]);
    }
    for j in 1..16 {
        for i in 1..16 {
            probes.push((w * i as f64 / 16.0, h * j as f64 / 16.0));
        }
    }
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for (c, r) in probes {
        let (x, y) = pixel_to_world(src_meta, c, r);
        let mapped = if same_frame {
            Some((x, y))
        } else {
            src_meta
                .world_to_lonlat(x, y)
                .and_then(|(lon, lat)| dst_meta.lonlat_to_world(lon, lat))
        };
        if let Some((tx, ty)) = mapped {
            min_x = min_x.min(tx);
            max_x = max_x.max(tx);
            min_y = min_y.min(ty);
            max_y = max_y.max(ty);
        }
    }
    if min_x > max_x {
        return Err(Error::UnsupportedProjectionPair(format!(
            "{} footprint does not map into {}",
            src_meta.projection.name(),
            target.name()
        )));
    }
    let cells = |extent: f64| -> usize {
        let n = extent / px;
        let n = if (n - n.round()).abs() < 1e-6 {
            n.round()
        } else {
            n.ceil()
        };
        (n as usize).max(1)
    };
    // Snap the footprint outward to whole multiples of the target spacing so
    // grids in the same frame share pixel centers.
    let snap = |v: f64, up: bool| {
        let q = v / px;
        let r = q.round();
        let q = if (q - r).abs() < 1e-6 {
            r
        } else if up {
            q.ceil()
        } else {
            q.floor()
        };
        q * px
    };
    let (min_x, max_x, min_y, max_y) = (
        snap(min_x, false),
        snap(max_x, true),
        snap(min_y, false),
        snap(max_y, true),
    );
    let out_w = cells(max_x - min_x);
    let out_h = cells(max_y - min_y);
    dst_meta.geotransform = [min_x, px, 0.0, max_y, 0.0, -px];

    let bands = src.band_count();
    let depth = src.depth();
    let rows: Vec<(Vec<Vec<f32>>, Vec<bool>)> = (0..out_h)
        .into_par_iter()
        .map(|row| {
            let mut vals = vec![vec![fill_value; out_w]; bands];
            let mut valid = vec![false; out_w];
            for col in 0..out_w {
                let (x, y) = pixel_to_world(&dst_meta, col as f64 + 0.5, row as f64 + 0.5);
                let world = if same_frame {
                    Some((x, y))
                } else {
                    dst_meta
                        .world_to_lonlat(x, y)
                        .and_then(|(lon, lat)| src_meta.lonlat_to_world(lon, lat))
                };
                let Some((sx, sy)) = world else { continue };
                let Ok((sc, sr)) = world_to_pixel(src_meta, sx, sy) else {
                    continue;
                };
                let (ix, iy) = (sc - 0.5, sr - 0.5);
                if ix < -0.5 || iy < -0.5 || ix >= w - 0.5 || iy >= h - 0.5 {
                    continue;
                }
                let nearest = (iy + 0.5).floor() as usize * src.width() + (ix + 0.5).floor() as usize;
                if !src.is_valid(nearest) {
                    continue;
                }
                valid[col] = true;
                for (b, out) in vals.iter_mut().enumerate() {
                    let v = sample(src.band(b), src.width(), src.height(), ix, iy, kernel);
                    out[col] = depth.quantize(v);
                }
            }
            (vals, valid)
        })
        .collect();

    let mut out_bands = vec![Vec::with_capacity(out_w * out_h); bands];
    let mut mask = Vec::with_capacity(out_w * out_h);
    for (vals, valid) in rows {
        for (b, v) in vals.into_iter().enumerate() {
            out_bands[b].extend(v);
        }
        mask.extend(valid);
    }
    Ok(GeoRaster::new(out_w, out_h, depth, out_bands)?
        .with_mask(mask, fill_value)?
        .with_meta(dst_meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::SampleDepth;
    use proptest::prelude::*;

    const R: f64 = LUNAR_RADIUS_M;

    fn identity_meta() -> GeoMeta {
        GeoMeta::new(Projection::Equirectangular, R, [0.0, 1.0, 0.0, 0.0, 0.0, -1.0], 1.0).unwrap()
    }

    #[test]
    fn pixel_to_world_affine_cases() {
        let m = identity_meta();
        assert_eq!(pixel_to_world(&m, 0.0, 0.0), (0.0, 0.0));
        assert_eq!(pixel_to_world(&m, 10.0, 5.0), (10.0, -5.0));
        assert_eq!(world_to_pixel(&m, 0.0, 0.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn translation_meta_inverse() {
        let m = GeoMeta::new(Projection::Equirectangular, R, [100.0, 1.0, 0.0, 200.0, 0.0, -1.0], 1.0).unwrap();
        let (c, r) = world_to_pixel(&m, 100.0, 200.0).unwrap();
        assert_eq!((c, r), (0.0, 0.0));
    }

    #[test]
    fn singular_geotransform_is_rejected() {
        // Row and column vectors parallel: det = 2*2 - 2*2 = 0.
        let m = GeoMeta {
            projection: Projection::Equirectangular,
            sphere_radius: R,
            geotransform: [0.0, 2.0, 2.0, 0.0, 2.0, 2.0],
            gsd: 2.0,
            standard_parallel_deg: 0.0,
        };
        assert!(matches!(
            world_to_pixel(&m, 1.0, 1.0),
            Err(Error::SingularGeotransform(_))
        ));
    }

    #[test]
    fn meta_invariants() {
        assert!(GeoMeta::new(Projection::Equirectangular, R, [0.0, 0.0, 0.0, 0.0, 0.0, -1.0], 1.0).is_err());
        assert!(GeoMeta::new(Projection::Equirectangular, -1.0, [0.0, 1.0, 0.0, 0.0, 0.0, -1.0], 1.0).is_err());
        assert!(GeoMeta::new(Projection::Equirectangular, R, [0.0, 2.0, 0.0, 0.0, 0.0, -2.0], 1.0).is_err());
        let g = GeoMeta::north_up(Projection::Geographic, (10.0, 5.0), 100.0).unwrap();
        assert!((g.geotransform[1] - 100.0 / (R * PI / 180.0)).abs() < 1e-15);
    }

    #[test]
    fn unknown_projection_name() {
        assert!(matches!(
            "mercator".parse::<Projection>(),
            Err(Error::UnsupportedProjectionPair(_))
        ));
        assert_eq!(
            "polar-stereographic-south".parse::<Projection>().unwrap(),
            Projection::PolarStereographicSouth
        );
    }

    // Reference values evaluated independently with the closed-form sphere formulas
    // (R = 1737400 m, standard parallel 0).
    #[test]
    fn equirectangular_hand_points() {
        let cases = [
            (0.0, 0.0, 0.0, 0.0),
            (10.0, 0.0, 303_233.50424149, 0.0),
            (-45.0, 30.0, -1_364_550.76908673, 909_700.51272448),
            (90.0, -60.0, 2_729_101.53817345, -1_819_401.02544897),
            (180.0, 89.0, 5_458_203.07634691, 2_698_778.1877493),
        ];
        for (lon, lat, x, y) in cases {
            let (px, py) = Projection::Equirectangular
                .forward(f64::to_radians(lon), f64::to_radians(lat), R, 0.0)
                .unwrap();
            assert!((px - x).abs() < 1e-4 && (py - y).abs() < 1e-4, "{lon},{lat}: {px},{py}");
        }
    }

    #[test]
    fn polar_stereographic_hand_points() {
        let north = [
            (0.0, 90.0, 0.0, 0.0),
            (0.0, 80.0, 0.0, -304_005.60801988),
            (90.0, 85.0, 151_713.0444185, 0.0),
            (45.0, 70.0, 433_245.02668299, -433_245.02668299),
            (180.0, 60.0, 0.0, 931_069.85385967),
        ];
        for (lon, lat, x, y) in north {
            let (px, py) = Projection::PolarStereographicNorth
                .forward(f64::to_radians(lon), f64::to_radians(lat), R, 0.0)
                .unwrap();
            assert!(
                (px - x).abs() < 1e-4 && (py - y).abs() < 1e-4,
                "N {lon},{lat}: {px},{py}"
            );
        }
        let south = [
            (0.0, -90.0, 0.0, 0.0),
            (0.0, -80.0, 0.0, 304_005.60801988),
            (90.0, -85.0, 151_713.0444185, 0.0),
            (-45.0, -70.0, -433_245.02668299, 433_245.02668299),
            (180.0, -60.0, 0.0, -931_069.85385967),
        ];
        for (lon, lat, x, y) in south {
            let (px, py) = Projection::PolarStereographicSouth
                .forward(f64::to_radians(lon), f64::to_radians(lat), R, 0.0)
                .unwrap();
            assert!(
                (px - x).abs() < 1e-4 && (py - y).abs() < 1e-4,
                "S {lon},{lat}: {px},{py}"
            );
        }
    }

    #[test]
    fn projections_round_trip() {
        for p in [
            Projection::Equirectangular,
            Projection::PolarStereographicNorth,
            Projection::PolarStereographicSouth,
            Projection::Geographic,
        ] {
            for (lon, lat) in [(0.3, 0.2), (-1.0, 1.2), (2.5, -1.1), (0.0, 0.0)] {
                let (x, y) = p.forward(lon, lat, R, 0.1).unwrap();
                let (l2, p2) = p.inverse(x, y, R, 0.1).unwrap();
                assert!((l2 - lon).abs() < 1e-9 && (p2 - lat).abs() < 1e-9, "{p:?}");
            }
        }
        assert!(Projection::PolarStereographicNorth
            .forward(0.0, -FRAC_PI_2, R, 0.0)
            .is_none());
    }

    proptest! {
        #[test]
        fn pixel_world_inverse(
            ox in -1e6f64..1e6, oy in -1e6f64..1e6,
            a in 0.1f64..100.0, b in -10.0f64..10.0, c in -10.0f64..10.0, d in 0.1f64..100.0,
            col in -1e4f64..1e4, row in -1e4f64..1e4,
        ) {
            let m = GeoMeta {
                projection: Projection::Equirectangular,
                sphere_radius: R,
                geotransform: [ox, a, b, oy, c, -d],
                gsd: a,
                standard_parallel_deg: 0.0,
            };
            let (x, y) = pixel_to_world(&m, col, row);
            let (c2, r2) = world_to_pixel(&m, x, y).unwrap();
            prop_assert!((c2 - col).abs() <= 1e-9 && (r2 - row).abs() <= 1e-9);
        }
    }

    fn checkerboard(w: usize, h: usize, cell: usize) -> GeoRaster {
        GeoRaster::from_fn_u8(w, h, |x, y| if (x / cell + y / cell) % 2 == 0 { 40 } else { 220 }).unwrap()
    }

    #[test]
    fn reproject_identity_is_pixel_identical() {
        let meta = GeoMeta::north_up(Projection::Equirectangular, (12_000.0, 340_000.0), 100.0).unwrap();
        let src = checkerboard(37, 23, 5).with_meta(meta);
        let out = reproject(&src, Projection::Equirectangular, 100.0, Kernel::Nearest).unwrap();
        assert_eq!(out.width(), 37);
        assert_eq!(out.height(), 23);
        assert_eq!(out.band(0), src.band(0));
        assert_eq!(out.valid_count(), out.len());
    }

    #[test]
    fn reproject_constant_stays_constant() {
        let meta = GeoMeta::north_up(Projection::Equirectangular, (0.0, 2_200_000.0), 200.0).unwrap();
        let src = GeoRaster::filled(64, 64, SampleDepth::U8, 91.0)
            .unwrap()
            .with_meta(meta);
        for k in [Kernel::Nearest, Kernel::Bilinear, Kernel::Bicubic] {
            let out = reproject(&src, Projection::PolarStereographicNorth, 250.0, k).unwrap();
            assert!(out.valid_count() > 0);
            for (i, v) in out.band(0).iter().enumerate() {
                if out.is_valid(i) {
                    assert_eq!(*v, 91.0);
                } else {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn reproject_requires_meta() {
        let src = GeoRaster::filled(4, 4, SampleDepth::U8, 1.0).unwrap();
        assert!(matches!(
            reproject(&src, Projection::Geographic, 10.0, Kernel::Nearest),
            Err(Error::MissingGeoMeta)
        ));
    }

    #[test]
    fn nearest_reprojection_introduces_no_new_values() {
        let meta = GeoMeta::north_up(Projection::Equirectangular, (50_000.0, 2_100_000.0), 100.0).unwrap();
        let src = GeoRaster::from_fn_u8(80, 60, |x, y| ((x * 7 + y * 13) % 5 * 50) as u8)
            .unwrap()
            .with_meta(meta);
        let out = reproject(&src, Projection::PolarStereographicNorth, 100.0, Kernel::Nearest).unwrap();
        let allowed: std::collections::BTreeSet<u32> = src.band(0).iter().map(|v| *v as u32).collect();
        for (i, v) in out.band(0).iter().enumerate() {
            if out.is_valid(i) {
                assert!(allowed.contains(&(*v as u32)));
            }
        }
    }

    #[test]
    fn checkerboard_round_trip_through_polar() {
        // High-latitude tile with its standard parallel at the tile's latitude.
        let lat0 = 70.0f64;
        let y0 = (R * (lat0 + 1.0).to_radians() / 100.0).round() * 100.0;
        let meta = GeoMeta::north_up(Projection::Equirectangular, (10_000.0, y0), 100.0)
            .unwrap()
            .with_standard_parallel(lat0);
        let src = checkerboard(192, 192, 64).with_meta(meta);
        let polar = reproject(&src, Projection::PolarStereographicNorth, 100.0, Kernel::Bilinear).unwrap();
        let back = reproject(&polar, Projection::Equirectangular, 100.0, Kernel::Bilinear).unwrap();
        let back_meta = back.meta().unwrap().clone();
        let mut total = 0.0;
        let mut n = 0usize;
        for row in 0..src.height() {
            for col in 0..src.width() {
                let (x, y) = pixel_to_world(src.meta().unwrap(), col as f64 + 0.5, row as f64 + 0.5);
                let (c, r) = world_to_pixel(&back_meta, x, y).unwrap();
                // Both grids are snapped to the same spacing, so centers coincide.
                assert!((c - c.floor() - 0.5).abs() < 1e-6 && (r - r.floor() - 0.5).abs() < 1e-6);
                let (ci, ri) = (c.floor() as isize, r.floor() as isize);
                if ci < 0 || ri < 0 || ci >= back.width() as isize || ri >= back.height() as isize {
                    continue;
                }
                let idx = ri as usize * back.width() + ci as usize;
                if !back.is_valid(idx) {
                    continue;
                }
                total += (back.band(0)[idx] as f64 - src.get(0, col, row) as f64).abs();
                n += 1;
            }
        }
        assert!(n > src.len() / 2, "only {n} valid pixels");
        let mad = total / n as f64;
        assert!(mad <= 2.0, "mean absolute difference {mad}");
    }
}
