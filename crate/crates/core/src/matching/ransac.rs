use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dlt_homography, Homography, MatchSet};
use crate::error::{invalid_param, Error, Result};

type Pt = (f64, f64);

/// Iterations evaluated per parallel batch. Fixed so the early-exit point does
/// not depend on the thread count.
const BATCH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub threshold_px: f64,
    pub max_iters: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            threshold_px: 3.0,
            max_iters: 2000,
            confidence: 0.995,
            seed: 42,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_px > 0.0) {
            return Err(invalid_param("threshold_px", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid_param("max_iters", "must be at least 1"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(invalid_param("confidence", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub homography: Homography,
    /// One flag per input correspondence, in input order.
    pub inliers: Vec<bool>,
    pub iterations: usize,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|v| **v).count()
    }
}

/// `sqrt(|H a − b|² + |H⁻¹ b − a|²)`.
pub fn symmetric_transfer_error(h: &Homography, h_inv: &Homography, a: Pt, b: Pt) -> f64 {
    let f = h.apply(a.0, a.1);
    let g = h_inv.apply(b.0, b.1);
    let e = (f.0 - b.0).powi(2) + (f.1 - b.1).powi(2) + (g.0 - a.0).powi(2) + (g.1 - a.1).powi(2);
    if e.is_finite() {
        e.sqrt()
    } else {
        f64::INFINITY
    }
}

struct Scored {
    iteration: usize,
    model: Option<Homography>,
    count: usize,
    error: f64,
}

fn score(h: &Homography, pts: &[(Pt, Pt)], threshold: f64) -> Option<(usize, f64)> {
    let inv = h.inverse().ok()?;
    let (mut count, mut error) = (0, 0.0);
    for &(a, b) in pts {
        let e = symmetric_transfer_error(h, &inv, a, b);
        if e < threshold {
            count += 1;
            error += e;
        }
    }
    Some((count, error))
}

fn mask(h: &Homography, pts: &[(Pt, Pt)], threshold: f64) -> Vec<bool> {
    match h.inverse() {
        Ok(inv) => pts
            .iter()
            .map(|&(a, b)| symmetric_transfer_error(h, &inv, a, b) < threshold)
            .collect(),
        Err(_) => vec![false; pts.len()],
    }
}

fn is_better(c: &Scored, best: &Scored) -> bool {
    c.count > best.count || (c.count == best.count && c.error < best.error)
}

/// Seeded RANSAC over point correspondences `(a, b)` with `b ≈ H a`.
///
/// Correspondences are put in a canonical order before sampling, and
/// iteration `k` draws its sample from a generator keyed by `(seed, k)`, so the
/// result is independent of input order and thread count.
pub fn ransac_points(pairs: &[(Pt, Pt)], params: &RansacParams) -> Result<RansacResult> {
    params.validate()?;
    if pairs.len() < 4 {
        return Err(Error::InsufficientMatches(pairs.len()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&i, &j| {
        let (p, q) = (pairs[i], pairs[j]);
        p.0 .0
            .total_cmp(&q.0 .0)
            .then(p.0 .1.total_cmp(&q.0 .1))
            .then(p.1 .0.total_cmp(&q.1 .0))
            .then(p.1 .1.total_cmp(&q.1 .1))
    });
    let pts: Vec<(Pt, Pt)> = order.iter().map(|&i| pairs[i]).collect();
    let n = pts.len();
    let threshold = params.threshold_px;

    let evaluate = |iteration: usize| -> Scored {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(iteration as u64);
        let sample = rand::seq::index::sample(&mut rng, n, 4);
        let minimal: Vec<(Pt, Pt)> = sample.iter().map(|i| pts[i]).collect();
        let fitted = dlt_homography(&minimal).ok();
        let scored = fitted.and_then(|h| score(&h, &pts, threshold).map(|s| (h, s)));
        match scored {
            Some((h, (count, error))) => Scored {
                iteration,
                model: Some(h),
                count,
                error,
            },
            None => Scored {
                iteration,
                model: None,
                count: 0,
                error: f64::INFINITY,
            },
        }
    };

    let mut best = Scored {
        iteration: usize::MAX,
        model: None,
        count: 0,
        error: f64::INFINITY,
    };
    let mut used = 0;
    let log_fail = (1.0 - params.confidence).ln();
    'outer: for start in (0..params.max_iters).step_by(BATCH) {
        let end = (start + BATCH).min(params.max_iters);
        let batch: Vec<Scored> = (start..end).into_par_iter().map(evaluate).collect();
        for c in batch {
            used = c.iteration + 1;
            if c.model.is_some() && is_better(&c, &best) {
                best = c;
            }
            if best.count >= 4 {
                let w = best.count as f64 / n as f64;
                let all_bad = 1.0 - w.powi(4);
                // Stop once (1 - w^4)^k drops below 1 - confidence.
                if all_bad <= 0.0 || used as f64 * all_bad.ln() < log_fail {
                    break 'outer;
                }
            }
        }
    }
    let model = match best.model {
        Some(h) if best.count >= 4 => h,
        _ => return Err(Error::NoModelFound),
    };

    let first = mask(&model, &pts, threshold);
    let inlier_pairs: Vec<(Pt, Pt)> = pts.iter().zip(&first).filter(|(_, m)| **m).map(|(p, _)| *p).collect();
    let (homography, sorted_mask) = match dlt_homography(&inlier_pairs) {
        Ok(refit) => {
            let m = mask(&refit, &pts, threshold);
            if m.iter().filter(|v| **v).count() >= 4 {
                (refit, m)
            } else {
                (model, first)
            }
        }
        Err(_) => (model, first),
    };
    let mut inliers = vec![false; n];
    for (k, &orig) in order.iter().enumerate() {
        inliers[orig] = sorted_mask[k];
    }
    Ok(RansacResult {
        homography,
        inliers,
        iterations: used,
    })
}

pub fn ransac_homography(matches: &MatchSet, params: &RansacParams) -> Result<RansacResult> {
    ransac_points(&matches.point_pairs(), params)
}
