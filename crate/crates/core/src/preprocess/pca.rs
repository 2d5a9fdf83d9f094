use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid_param, Error, Result};
use crate::preprocess::normalize_u8;
use crate::raster::{GeoRaster, SampleDepth};

/// Principal components of a stack of aligned single-band rasters.
#[derive(Debug, Clone)]
pub struct PcaResult {
    /// The kept components, each stretched to 8 bits.
    pub components: Vec<GeoRaster>,
    /// Raw projections of every pixel onto the kept eigenvectors (masked pixels are 0).
    pub scores: Vec<Vec<f64>>,
    /// All eigenvalues of the band covariance, descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors matching `eigenvalues`, sign-fixed so the largest-magnitude entry is positive.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Fraction of total variance per component, over all components.
    pub explained_variance: Vec<f64>,
}

pub fn pca_stack(inputs: &[GeoRaster], keep: usize) -> Result<PcaResult> {
    if inputs.len() < 2 {
        return Err(invalid_param("inputs", "PCA needs at least two rasters"));
    }
    if keep == 0 || keep > inputs.len() {
        return Err(invalid_param(
            "keep_components",
            format!("must lie in 1..={}", inputs.len()),
        ));
    }
    let (w, h) = (inputs[0].width(), inputs[0].height());
    if let Some(bad) = inputs.iter().find(|r| r.width() != w || r.height() != h) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            bad.width(),
            bad.height(),
            w,
            h
        )));
    }
    let n_bands = inputs.len();
    let valid: Vec<bool> = (0..w * h).map(|i| inputs.iter().all(|r| r.is_valid(i))).collect();
    let n = valid.iter().filter(|v| **v).count();
    if n == 0 {
        return Err(Error::EmptyValidRegion);
    }

    let means: Vec<f64> = inputs
        .iter()
        .map(|r| {
            r.band(0)
                .iter()
                .zip(&valid)
                .filter(|(_, v)| **v)
                .map(|(x, _)| *x as f64)
                .sum::<f64>()
                / n as f64
        })
        .collect();
    let mut cov = DMatrix::<f64>::zeros(n_bands, n_bands);
    for i in 0..n_bands {
        for j in i..n_bands {
            let (a, b) = (inputs[i].band(0), inputs[j].band(0));
            let mut s = 0.0;
            for p in 0..w * h {
                if valid[p] {
                    s += (a[p] as f64 - means[i]) * (b[p] as f64 - means[j]);
                }
            }
            cov[(i, j)] = s / n as f64;
            cov[(j, i)] = cov[(i, j)];
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n_bands).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| {
            let v: Vec<f64> = eig.eigenvectors.column(k).iter().cloned().collect();
            let dominant = v
                .iter()
                .cloned()
                .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if dominant < 0.0 {
                v.iter().map(|x| -x).collect()
            } else {
                v
            }
        })
        .collect();

    let total: f64 = eigenvalues.iter().map(|l| l.max(0.0)).sum();
    let explained_variance: Vec<f64> = if total > 0.0 {
        eigenvalues.iter().map(|l| l.max(0.0) / total).collect()
    } else {
        // No variance at all: attribute everything to the first component.
        (0..n_bands).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect()
    };

    let mut scores = Vec::with_capacity(keep);
    let mut components = Vec::with_capacity(keep);
    for vec in eigenvectors.iter().take(keep) {
        let s: Vec<f64> = (0..w * h)
            .map(|p| {
                if !valid[p] {
                    return 0.0;
                }
                vec.iter()
                    .zip(inputs.iter().zip(&means))
                    .map(|(c, (r, m))| c * (r.band(0)[p] as f64 - m))
                    .sum()
            })
            .collect();
        let raster = inputs[0]
            .with_bands(SampleDepth::F32, vec![s.iter().map(|v| *v as f32).collect()])?
            .with_mask(valid.clone(), 0.0)?;
        components.push(normalize_u8(&raster)?);
        scores.push(s);
    }

    Ok(PcaResult {
        components,
        scores,
        eigenvalues,
        eigenvectors,
        explained_variance,
    })
}
