use serde::{Deserialize, Serialize};

use super::config::MetricSplit;
use super::run::{Experiment, SweepResult};
use crate::ensemble::Method;
use crate::error::{Error, Result};
use crate::theory::{self, StdPrediction};

/// Test-set prediction std against the method parameter for one ensemble
/// size, with its linear fit quality and the closed-form prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityProfile {
    pub method: Method,
    #[serde(rename = "M")]
    pub m: usize,
    pub grid: Vec<f64>,
    /// Mean std over non-diverged folds.
    pub std: Vec<f64>,
    pub linearity: f64,
    pub prediction: StdPrediction,
    pub relative_rms: f64,
}

pub fn diversity_profile(
    exp: &Experiment,
    method: Method,
    grid: &[f64],
    m: usize,
) -> Result<DiversityProfile> {
    let (profile, _) = diversity_profile_with_rows(exp, method, grid, m)?;
    Ok(profile)
}

/// As [`diversity_profile`], also returning the underlying sweep.
pub fn diversity_profile_with_rows(
    exp: &Experiment,
    method: Method,
    grid: &[f64],
    m: usize,
) -> Result<(DiversityProfile, SweepResult)> {
    if !method.is_adjustable() {
        return Err(Error::invalid(format!(
            "{method} has no adjustable parameter"
        )));
    }
    if grid.len() < 3 {
        return Err(Error::invalid(
            "diversity profile needs at least 3 grid points",
        ));
    }
    let sweep = exp.run_grid(method, grid, &[m])?;
    let agg = sweep.aggregate(method, Some(m), MetricSplit::Test);
    let std: Vec<f64> = agg.iter().map(|a| a.std).collect();
    if let Some(a) = agg.iter().find(|a| !a.std.is_finite()) {
        return Err(Error::invalid(format!(
            "every fold diverged at {method} parameter {}",
            a.param
        )));
    }
    let linearity = theory::linearity_score(grid, &std)?;
    let prediction = theory::predict_std(method, grid, m, &std)?;
    let relative_rms = theory::relative_rms_deviation(&prediction.predicted, &std);
    Ok((
        DiversityProfile {
            method,
            m,
            grid: grid.to_vec(),
            std,
            linearity,
            prediction,
            relative_rms,
        },
        sweep,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{DataSource, ExperimentConfig};

    fn exp() -> Experiment {
        Experiment::new(&ExperimentConfig {
            data: DataSource::Synthetic {
                n: 60,
                noise_sd: 0.1,
                seed: 2,
            },
            method: Method::Sea,
            grid: vec![0.0],
            sizes: vec![4],
            folds: 2,
            epochs: 30,
            learning_rate: 0.1,
            hidden: vec![4],
            seed: 8,
            output_dir: "unused".into(),
            batch_size: None,
            shuffle: false,
            workers: Some(2),
            divergence_threshold: 1e6,
            boundary_metric: MetricSplit::Test,
        })
        .unwrap()
    }

    #[test]
    fn profile_reports_fit() {
        let p = diversity_profile(&exp(), Method::Sea, &[0.0, 0.5, 1.0], 4).unwrap();
        assert_eq!(p.std.len(), 3);
        assert!((0.0..=1.0).contains(&p.linearity));
        assert!(p.prediction.scale.is_finite());
        assert!(p.relative_rms.is_finite());
    }

    #[test]
    fn two_point_grid_is_rejected() {
        assert!(diversity_profile(&exp(), Method::Sea, &[0.0, 1.0], 4).is_err());
        assert!(diversity_profile(&exp(), Method::Bagging, &[0.0, 0.5, 1.0], 4).is_err());
    }
}
