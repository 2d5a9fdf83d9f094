use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type Pt = (f64, f64);

/// Control point pairs in reference-frame pixels: `(reference, registered)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlPointSet {
    pub pairs: Vec<(Pt, Pt)>,
}

impl ControlPointSet {
    pub fn new(pairs: Vec<(Pt, Pt)>) -> Self {
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Root-mean-square residual per axis.
pub fn rmse_xy(points: &ControlPointSet) -> Result<(f64, f64)> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let n = points.len() as f64;
    let (sx, sy) = points.pairs.iter().fold((0.0, 0.0), |(sx, sy), (r, p)| {
        (sx + (p.0 - r.0).powi(2), sy + (p.1 - r.1).powi(2))
    });
    Ok(((sx / n).sqrt(), (sy / n).sqrt()))
}
