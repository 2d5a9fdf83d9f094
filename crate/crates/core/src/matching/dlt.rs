use nalgebra::{DMatrix, Matrix2, Matrix3, SymmetricEigen};

use super::Homography;
use crate::error::{Error, Result};

const AREA_TOL: f64 = 1e-9;

type Pt = (f64, f64);

/// Similarity moving the centroid to the origin and the mean distance to √2.
fn normalizer(pts: &[Pt]) -> Result<Matrix3<f64>> {
    let n = pts.len() as f64;
    let (cx, cy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (cx, cy) = (cx / n, cy / n);
    let mean = pts
        .iter()
        .map(|(x, y)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::DegenerateConfiguration("coincident points".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn transform(t: &Matrix3<f64>, (x, y): Pt) -> Pt {
    (t[(0, 0)] * x + t[(0, 2)], t[(1, 1)] * y + t[(1, 2)])
}

fn triangle_area(a: Pt, b: Pt, c: Pt) -> f64 {
    0.5 * ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).abs()
}

fn check_spread(pts: &[Pt]) -> Result<()> {
    if pts.len() == 4 {
        for skip in 0..4 {
            let t: Vec<Pt> = (0..4).filter(|i| *i != skip).map(|i| pts[i]).collect();
            if triangle_area(t[0], t[1], t[2]) <= AREA_TOL {
                return Err(Error::DegenerateConfiguration(
                    "three of four points are collinear".into(),
                ));
            }
        }
        return Ok(());
    }
    // Larger sets only need to span the plane.
    let n = pts.len() as f64;
    let (sxx, syy, sxy) = pts
        .iter()
        .fold((0.0, 0.0, 0.0), |(a, b, c), (x, y)| (a + x * x, b + y * y, c + x * y));
    let cov = Matrix2::new(sxx / n, sxy / n, sxy / n, syy / n);
    if SymmetricEigen::new(cov).eigenvalues.min() <= AREA_TOL {
        return Err(Error::DegenerateConfiguration("points are collinear".into()));
    }
    Ok(())
}

/// Least-squares homography `b ≈ H a` from `(a, b)` correspondences with
/// Hartley normalization.
pub fn dlt_homography(pairs: &[(Pt, Pt)]) -> Result<Homography> {
    if pairs.len() < 4 {
        return Err(Error::InsufficientPoints {
            needed: 4,
            got: pairs.len(),
        });
    }
    let src: Vec<Pt> = pairs.iter().map(|p| p.0).collect();
    let dst: Vec<Pt> = pairs.iter().map(|p| p.1).collect();
    let ta = normalizer(&src)?;
    let tb = normalizer(&dst)?;
    let na: Vec<Pt> = src.iter().map(|p| transform(&ta, *p)).collect();
    let nb: Vec<Pt> = dst.iter().map(|p| transform(&tb, *p)).collect();
    check_spread(&na)?;
    check_spread(&nb)?;

    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, ((x, y), (u, v))) in na.iter().zip(&nb).enumerate() {
        let r = 2 * k;
        a.row_mut(r)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, *u]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, *v]);
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let sv = &svd.singular_values;
    let (imin, _) = sv.argmin();
    let mut sorted: Vec<f64> = sv.iter().cloned().collect();
    sorted.sort_by(f64::total_cmp);
    if sorted[1] <= 1e-12 * sorted[8].max(1e-300) {
        return Err(Error::DegenerateConfiguration("solution is not unique".into()));
    }
    let h = vt.row(imin);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let tb_inv = tb.try_inverse().expect("similarity is invertible");
    Homography::new(tb_inv * hn * ta).map_err(|_| Error::DegenerateConfiguration("estimate is singular".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(h: &Homography, pts: &[Pt]) -> Vec<(Pt, Pt)> {
        pts.iter().map(|&p| (p, h.apply(p.0, p.1))).collect()
    }

    #[test]
    fn unit_square_identity_and_translation() {
        let sq = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let h = dlt_homography(&map(&Homography::identity(), &sq)).unwrap();
        assert!(h.distance(&Homography::identity()) < 1e-9);
        let t = Homography::translation(5.0, -3.0);
        let h = dlt_homography(&map(&t, &sq)).unwrap();
        assert!(h.distance(&t) < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        let line = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (5.0, 1.0)];
        let err = dlt_homography(&map(&Homography::identity(), &line)).unwrap_err();
        assert!(matches!(err, Error::DegenerateConfiguration(_)));
        let same = [(1.0, 1.0); 6];
        assert!(dlt_homography(&map(&Homography::identity(), &same)).is_err());
        let three = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        assert!(matches!(
            dlt_homography(&map(&Homography::identity(), &three)),
            Err(Error::InsufficientPoints { needed: 4, got: 3 })
        ));
    }
}
