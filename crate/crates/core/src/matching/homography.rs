use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Invertible 3×3 projective map, scaled so `h33 = 1` when `|h33| > 1e-12`
/// and to unit Frobenius norm otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonInvertibleHomography);
        }
        let m = if m[(2, 2)].abs() > 1e-12 {
            m / m[(2, 2)]
        } else {
            let n = m.norm();
            if n == 0.0 {
                return Err(Error::NonInvertibleHomography);
            }
            m / n
        };
        if m.determinant().abs() <= 1e-12 {
            return Err(Error::NonInvertibleHomography);
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self(Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0))
    }

    /// Rotation by `angle` radians and uniform `scale` about the origin, then translation.
    pub fn similarity(angle: f64, scale: f64, dx: f64, dy: f64) -> Result<Self> {
        let (c, s) = (scale * angle.cos(), scale * angle.sin());
        Self::new(Matrix3::new(c, -s, dx, s, c, dy, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        std::array::from_fn(|r| std::array::from_fn(|c| self.0[(r, c)]))
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let v = self.0 * Vector3::new(x, y, 1.0);
        (v[0] / v[2], v[1] / v[2])
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self.0.try_inverse().ok_or(Error::NonInvertibleHomography)?;
        Self::new(inv)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self> {
        Self::new(self.0 * other.0)
    }

    /// Frobenius distance to `other` after both are normalized.
    pub fn distance(&self, other: &Homography) -> f64 {
        (self.0 - other.0).norm()
    }
}

impl Serialize for Homography {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Homography {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Homography::from_rows(rows).map_err(serde::de::Error::custom)
    }
}
