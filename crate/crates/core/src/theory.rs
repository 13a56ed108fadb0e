//! Closed-form results for adjustable ensembles.
//!
//! Parameters of the three adjustable losses are related through the SEA
//! parameter `k`:
//!
//! * NCL*: `gamma = k M^2 / ((M-1)(k(M-1)+1))`, inverse `k = (M-1)gamma / (M^2 - (M-1)^2 gamma)`
//! * NCL:  `lambda = k M / (1 + k(M-1))`, inverse `k = lambda / (M - lambda(M-1))`
//!
//! Training stays inside the SEA interval `-1/(M-1) < k < 2 + 1/(M-1)`, which
//! maps to the upper bounds `lambda_SEA` and `gamma_SEA`. The looser bounds
//! `lambda_1` and `gamma_1` follow from positive-definiteness of the loss
//! Hessian alone.

use serde::{Deserialize, Serialize};

use crate::ensemble::Method;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const SINGULAR_EPS: f64 = 1e-12;

/// Interval with exact floating endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    /// Whether the endpoints are excluded.
    pub open: bool,
}

impl Interval {
    pub fn open(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, open: true }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            open: false,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        if self.open {
            self.lo < x && x < self.hi
        } else {
            self.lo <= x && x <= self.hi
        }
    }

    /// `other` lies inside `self`.
    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

fn check_size(m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::invalid(format!(
            "ensemble size must be >= 2, got {m}"
        )));
    }
    Ok(m as f64)
}

/// Open interval of `k` for which training reduces ensemble error.
pub fn sea_k_bounds(m: usize) -> Result<Interval> {
    let mf = check_size(m)?;
    Ok(Interval::open(-1.0 / (mf - 1.0), 2.0 + 1.0 / (mf - 1.0)))
}

/// `beta = (1-k)(M-1)/M`; `|beta| < 1` exactly when `k` is inside
/// [`sea_k_bounds`].
pub fn beta_from_k(k: f64, m: usize) -> Result<f64> {
    let mf = check_size(m)?;
    Ok((1.0 - k) * (mf - 1.0) / mf)
}

pub fn gamma_from_k(k: f64, m: usize) -> Result<f64> {
    let mf = check_size(m)?;
    let den = (mf - 1.0) * (k * (mf - 1.0) + 1.0);
    if den.abs() < SINGULAR_EPS {
        return Err(Error::Singular(format!(
            "gamma undefined at k = {k}, M = {m}"
        )));
    }
    Ok(k * mf * mf / den)
}

pub fn k_from_gamma(gamma: f64, m: usize) -> Result<f64> {
    let mf = check_size(m)?;
    let den = mf * mf - (mf - 1.0) * (mf - 1.0) * gamma;
    if den.abs() < SINGULAR_EPS {
        return Err(Error::Singular(format!(
            "k undefined at gamma = {gamma}, M = {m}"
        )));
    }
    Ok((mf - 1.0) * gamma / den)
}

pub fn lambda_from_k(k: f64, m: usize) -> Result<f64> {
    let mf = check_size(m)?;
    let den = 1.0 + k * (mf - 1.0);
    if den.abs() < SINGULAR_EPS {
        return Err(Error::Singular(format!(
            "lambda undefined at k = {k}, M = {m}"
        )));
    }
    Ok(k * mf / den)
}

pub fn k_from_lambda(lambda: f64, m: usize) -> Result<f64> {
    let mf = check_size(m)?;
    let den = mf - lambda * (mf - 1.0);
    if den.abs() < SINGULAR_EPS {
        return Err(Error::Singular(format!(
            "k undefined at lambda = {lambda}, M = {m}"
        )));
    }
    Ok(lambda / den)
}

/// `(lambda_SEA, lambda_1) = ((2M-1)/(2(M-1)), M/(M-1))`.
pub fn ncl_lambda_bounds(m: usize) -> Result<(f64, f64)> {
    let mf = check_size(m)?;
    Ok(((2.0 * mf - 1.0) / (2.0 * (mf - 1.0)), mf / (mf - 1.0)))
}

/// `(gamma_SEA, gamma_1) = (M(M-1/2)/(M-1)^2, (M/(M-1))^2)`.
pub fn nclstar_gamma_bounds(m: usize) -> Result<(f64, f64)> {
    let mf = check_size(m)?;
    let r = mf / (mf - 1.0);
    Ok((mf * (mf - 0.5) / ((mf - 1.0) * (mf - 1.0)), r * r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub m: usize,
    pub sea_k_interval: Interval,
    pub ncl_lambda_hessian: f64,
    pub ncl_lambda_sea: f64,
    pub nclstar_gamma_hessian: f64,
    pub nclstar_gamma_sea: f64,
}

impl BoundReport {
    pub fn for_size(m: usize) -> Result<Self> {
        let (ncl_lambda_sea, ncl_lambda_hessian) = ncl_lambda_bounds(m)?;
        let (nclstar_gamma_sea, nclstar_gamma_hessian) = nclstar_gamma_bounds(m)?;
        Ok(BoundReport {
            m,
            sea_k_interval: sea_k_bounds(m)?,
            ncl_lambda_hessian,
            ncl_lambda_sea,
            nclstar_gamma_hessian,
            nclstar_gamma_sea,
        })
    }
}

/// Practically swept parameter range of `method`, expressed in `k`.
pub fn effective_range(method: Method, m: usize) -> Result<Interval> {
    let mf = check_size(m)?;
    match method {
        Method::Sea => Ok(Interval::closed(0.0, 2.0)),
        Method::Ncl => Ok(Interval::closed(0.0, k_from_lambda(1.0, m)?)),
        Method::NclStar => Ok(Interval::closed(0.0, (mf - 1.0) / (2.0 * mf - 1.0))),
        Method::Independent | Method::Bagging => Err(Error::invalid(format!(
            "{method} has no adjustable parameter"
        ))),
    }
}

/// Population standard deviation of the learners' predictions, one column
/// per output dimension, averaged over dimensions. `preds` is `M x O`.
pub fn empirical_std(preds: &Matrix) -> f64 {
    let (m, o) = preds.shape();
    if m == 0 || o == 0 {
        return 0.0;
    }
    let mf = m as f64;
    let mut total = 0.0;
    for c in 0..o {
        let mean = (0..m).map(|r| preds.get(r, c)).sum::<f64>() / mf;
        let var = (0..m)
            .map(|r| (preds.get(r, c) - mean).powi(2))
            .sum::<f64>()
            / mf;
        total += var.sqrt();
    }
    total / o as f64
}

/// `std(k) = (M-1)/M * (1 + (M-1)k) * C`
pub fn predicted_std_sea(k: f64, m: usize, c: f64) -> Result<f64> {
    let mf = check_size(m)?;
    Ok((mf - 1.0) / mf * (1.0 + (mf - 1.0) * k) * c)
}

/// `std(lambda) = -(M-1) C / (lambda(M-1) - M)`
pub fn predicted_std_ncl(lambda: f64, m: usize, c: f64) -> Result<f64> {
    let mf = check_size(m)?;
    let den = lambda * (mf - 1.0) - mf;
    if den.abs() < SINGULAR_EPS {
        return Err(Error::Singular(format!(
            "std(lambda) undefined at lambda = {lambda}, M = {m}"
        )));
    }
    Ok(-(mf - 1.0) * c / den)
}

/// `R = 2C / |(lambda - 1) - 1/(M-1)|^3`
pub fn ncl_std_curvature(lambda: f64, m: usize, c: f64) -> Result<f64> {
    let mf = check_size(m)?;
    let d = ((lambda - 1.0) - 1.0 / (mf - 1.0)).abs();
    if d < SINGULAR_EPS {
        return Err(Error::Singular(format!(
            "curvature undefined at lambda = {lambda}, M = {m}"
        )));
    }
    Ok(2.0 * c / (d * d * d))
}

/// Predicted diversity curve over a parameter grid, plus the NCL curvature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdPrediction {
    pub grid: Vec<f64>,
    pub predicted: Vec<f64>,
    pub scale: f64,
    pub curvature: Option<Vec<f64>>,
}

/// Predicted std curve for `method` over `grid` (in the method's own
/// parameter) with unit scale. NCL* is mapped into `k` first.
pub fn std_shape(method: Method, grid: &[f64], m: usize) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&p| match method {
            Method::Sea => predicted_std_sea(p, m, 1.0),
            Method::Ncl => predicted_std_ncl(p, m, 1.0),
            Method::NclStar => predicted_std_sea(k_from_gamma(p, m)?, m, 1.0),
            Method::Independent | Method::Bagging => Err(Error::invalid(format!(
                "{method} has no adjustable parameter"
            ))),
        })
        .collect()
}

/// Least-squares scale `C` minimising `sum (C * shape_i - observed_i)^2`.
pub fn fit_scale(shape: &[f64], observed: &[f64]) -> Result<f64> {
    if shape.len() != observed.len() || shape.is_empty() {
        return Err(Error::dim(
            "shape and observations must be equally long and non-empty",
        ));
    }
    let den: f64 = shape.iter().map(|s| s * s).sum();
    if den == 0.0 {
        return Err(Error::invalid("zero predicted shape cannot be scaled"));
    }
    Ok(shape.iter().zip(observed).map(|(s, o)| s * o).sum::<f64>() / den)
}

/// Fits `C` to `observed` and returns the scaled prediction.
pub fn predict_std(
    method: Method,
    grid: &[f64],
    m: usize,
    observed: &[f64],
) -> Result<StdPrediction> {
    let shape = std_shape(method, grid, m)?;
    let scale = fit_scale(&shape, observed)?;
    let curvature = match method {
        Method::Ncl => Some(
            grid.iter()
                .map(|&l| ncl_std_curvature(l, m, scale.abs()))
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => None,
    };
    Ok(StdPrediction {
        grid: grid.to_vec(),
        predicted: shape.iter().map(|s| s * scale).collect(),
        scale,
        curvature,
    })
}

/// `sqrt(sum (p - o)^2 / sum o^2)`.
pub fn relative_rms_deviation(predicted: &[f64], observed: &[f64]) -> f64 {
    let num: f64 = predicted
        .iter()
        .zip(observed)
        .map(|(p, o)| (p - o) * (p - o))
        .sum();
    let den: f64 = observed.iter().map(|o| o * o).sum();
    (num / den).sqrt()
}

/// Coefficient of determination of the least-squares line through
/// `(xs, ys)`, clamped to `[0, 1]`. A constant series scores 1.
pub fn linearity_score(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::dim("xs and ys differ in length"));
    }
    if xs.len() < 3 {
        return Err(Error::invalid("linearity needs at least 3 points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("grid points must be distinct"));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("grid points must be distinct"));
    }
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if syy == 0.0 {
        return Ok(1.0);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (my + slope * (x - mx));
            r * r
        })
        .sum();
    Ok((1.0 - sse / syy).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn k_bounds_examples() {
        let b = sea_k_bounds(5).unwrap();
        assert_eq!((b.lo, b.hi), (-0.25, 2.25));
        assert!(b.open);
        let b = sea_k_bounds(2).unwrap();
        assert_eq!((b.lo, b.hi), (-1.0, 3.0));
        assert!(sea_k_bounds(1).is_err());
        let mut prev = sea_k_bounds(2).unwrap();
        for m in 3..200 {
            let b = sea_k_bounds(m).unwrap();
            assert!(b.lo > prev.lo && b.lo < 0.0);
            assert!(b.hi < prev.hi && b.hi > 2.0);
            prev = b;
        }
    }

    #[test]
    fn beta_examples() {
        for m in 2..30 {
            assert_eq!(beta_from_k(1.0, m).unwrap(), 0.0);
            let b = sea_k_bounds(m).unwrap();
            assert!(close(beta_from_k(b.lo, m).unwrap().abs(), 1.0));
            assert!(close(beta_from_k(b.hi, m).unwrap().abs(), 1.0));
        }
        assert!(close(beta_from_k(0.0, 5).unwrap(), 0.8));
    }

    #[test]
    fn gamma_mapping_examples() {
        assert_eq!(gamma_from_k(0.0, 7).unwrap(), 0.0);
        assert_eq!(k_from_gamma(0.0, 7).unwrap(), 0.0);
        assert!(close(gamma_from_k(1.0, 5).unwrap(), 1.25));
        assert!(close(gamma_from_k(2.25, 5).unwrap(), 1.40625));
        assert!(matches!(gamma_from_k(-0.25, 5), Err(Error::Singular(_))));
        assert!(matches!(
            k_from_gamma(25.0 / 16.0, 5),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn lambda_mapping_examples() {
        for m in 2..40 {
            assert!(close(lambda_from_k(1.0, m).unwrap(), 1.0));
        }
        assert!(close(lambda_from_k(2.0, 5).unwrap(), 10.0 / 9.0));
        let k = k_from_lambda(0.5, 5).unwrap();
        assert!(close(k, 1.0 / 6.0));
        assert!(close(lambda_from_k(k, 5).unwrap(), 0.5));
        assert!(matches!(k_from_lambda(1.25, 5), Err(Error::Singular(_))));
    }

    #[test]
    fn bound_examples() {
        assert_eq!(ncl_lambda_bounds(5).unwrap(), (1.125, 1.25));
        assert_eq!(ncl_lambda_bounds(2).unwrap(), (1.5, 2.0));
        assert_eq!(nclstar_gamma_bounds(5).unwrap(), (1.40625, 1.5625));
        assert_eq!(nclstar_gamma_bounds(2).unwrap(), (3.0, 4.0));
        let (ls, l1) = ncl_lambda_bounds(1_000_000).unwrap();
        assert!((ls - 1.0).abs() < 1e-5 && (l1 - 1.0).abs() < 1e-5);
        let (gs, g1) = nclstar_gamma_bounds(1_000_000).unwrap();
        assert!((gs - 1.0).abs() < 1e-5 && (g1 - 1.0).abs() < 1e-5);
        assert!(ncl_lambda_bounds(1).is_err());
        assert!(nclstar_gamma_bounds(0).is_err());
    }

    #[test]
    fn report_invariants() {
        for m in 2..200 {
            let r = BoundReport::for_size(m).unwrap();
            assert!(r.ncl_lambda_sea < r.ncl_lambda_hessian);
            assert!(r.nclstar_gamma_sea < r.nclstar_gamma_hessian);
        }
    }

    #[test]
    fn effective_range_examples() {
        for m in [2, 5, 17] {
            assert_eq!(
                effective_range(Method::Ncl, m).unwrap(),
                Interval::closed(0.0, 1.0)
            );
        }
        let r = effective_range(Method::NclStar, 5).unwrap();
        assert!(close(r.hi, 4.0 / 9.0));
        assert_eq!(
            effective_range(Method::Sea, 5).unwrap(),
            Interval::closed(0.0, 2.0)
        );
        assert!(effective_range(Method::Bagging, 5).is_err());
        // image of gamma = 1 under the inverse mapping
        assert!(close(k_from_gamma(1.0, 5).unwrap(), r.hi));
    }

    #[test]
    fn empirical_std_examples() {
        let m = Matrix::from_rows(&[[2.0], [2.0], [2.0]]).unwrap();
        assert_eq!(empirical_std(&m), 0.0);
        let m = Matrix::from_rows(&[[1.0], [3.0]]).unwrap();
        assert_eq!(empirical_std(&m), 1.0);
        let m = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        assert!((empirical_std(&m) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn std_prediction_examples() {
        assert!(close(predicted_std_sea(0.0, 5, 1.0).unwrap(), 0.8));
        assert!(close(predicted_std_ncl(0.0, 5, 1.0).unwrap(), 0.8));
        assert!(close(ncl_std_curvature(0.0, 5, 1.0).unwrap(), 1.024));
        assert!(predicted_std_ncl(1.25, 5, 1.0).is_err());
        for m in [2, 5, 20] {
            for i in 0..=20 {
                let k = i as f64 * 0.1;
                let l = lambda_from_k(k, m).unwrap();
                let a = predicted_std_sea(k, m, 0.7).unwrap();
                let b = predicted_std_ncl(l, m, 0.7).unwrap();
                assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "M={m} k={k}");
            }
        }
    }

    #[test]
    fn fitted_scale_recovers_exact_curve() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let obs: Vec<f64> = grid
            .iter()
            .map(|&k| predicted_std_sea(k, 5, 0.3).unwrap())
            .collect();
        let p = predict_std(Method::Sea, &grid, 5, &obs).unwrap();
        assert!((p.scale - 0.3).abs() < 1e-12);
        assert!(relative_rms_deviation(&p.predicted, &obs) < 1e-12);
        let p = predict_std(Method::Ncl, &grid, 5, &obs).unwrap();
        assert_eq!(p.curvature.as_ref().unwrap().len(), grid.len());
    }

    #[test]
    fn linearity_examples() {
        let xs: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let lin: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        assert!((linearity_score(&xs, &lin).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(linearity_score(&xs, &[2.0; 11]).unwrap(), 1.0);
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        // exact rational least squares for 11 equispaced points on [0, 1]
        assert!((linearity_score(&xs, &sq).unwrap() - 500.0 / 539.0).abs() < 1e-12);
        assert!(linearity_score(&xs[..2], &sq[..2]).is_err());
        assert!(linearity_score(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(linearity_score(&[0.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }
}
