use serde::{Deserialize, Serialize};

use super::metrics::MetricKind;
use crate::error::{Error, Result};

/// Largest relative spread `(max - min) / |mean|` a plateau run may have.
pub const PLATEAU_SPREAD: f64 = 0.02;
/// Required relative improvement over the plateau.
pub const IMPROVEMENT: f64 = 0.05;
pub const MIN_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEstimate {
    pub kind: MetricKind,
    /// `(param, metric)` pairs in ascending parameter order.
    pub curve: Vec<(f64, f64)>,
    /// Mean metric over the trailing plateau run.
    pub plateau: Option<f64>,
    /// Index of the first point of the plateau run.
    pub plateau_start: Option<usize>,
    /// Largest parameter at least 5% better than the plateau.
    pub boundary: Option<f64>,
}

impl BoundaryEstimate {
    pub fn is_plateau(&self, i: usize) -> bool {
        self.plateau_start.is_some_and(|s| i >= s)
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary == Some(self.curve[i].0)
    }
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if max == min {
        0.0
    } else {
        (max - min) / mean.abs()
    }
}

/// Finds the low-performance plateau at the right end of `curve` and the
/// last parameter that beats it by the improvement margin.
pub fn estimate_real_boundary(curve: &[(f64, f64)], kind: MetricKind) -> Result<BoundaryEstimate> {
    if curve.len() < MIN_POINTS {
        return Err(Error::invalid(format!(
            "boundary estimation needs at least {MIN_POINTS} points, got {}",
            curve.len()
        )));
    }
    if curve.iter().any(|(p, v)| !p.is_finite() || v.is_nan()) {
        return Err(Error::invalid("boundary curve contains non-finite values"));
    }
    if curve.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::invalid("boundary curve must be sorted by parameter"));
    }
    let values: Vec<f64> = curve.iter().map(|c| c.1).collect();
    let n = values.len();
    let mut start = n;
    while start > 0 && spread(&values[start - 1..]) < PLATEAU_SPREAD {
        start -= 1;
    }
    let mut est = BoundaryEstimate {
        kind,
        curve: curve.to_vec(),
        plateau: None,
        plateau_start: None,
        boundary: None,
    };
    if n - start < 2 {
        return Ok(est);
    }
    let plateau = values[start..].iter().sum::<f64>() / (n - start) as f64;
    let beats = |v: f64| match kind {
        MetricKind::Rmse => v <= (1.0 - IMPROVEMENT) * plateau,
        MetricKind::Acc => v >= (1.0 + IMPROVEMENT) * plateau,
    };
    est.plateau = Some(plateau);
    est.plateau_start = Some(start);
    est.boundary = curve.iter().rev().find(|(_, v)| beats(*v)).map(|c| c.0);
    Ok(est)
}
