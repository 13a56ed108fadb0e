use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::{self, Dataset};
use crate::ensemble::Method;
use crate::error::{Error, Result};

pub const CONFIG_FORMAT: &str = "sea-config/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        n: usize,
        noise_sd: f64,
        seed: u64,
    },
    Libsvm {
        path: PathBuf,
        #[serde(default)]
        classification: bool,
        #[serde(default)]
        n_features: Option<usize>,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Synthetic { n, noise_sd, seed } => {
                dataio::synth_regression(*n, *noise_sd, *seed)
            }
            DataSource::Libsvm {
                path,
                classification,
                n_features,
            } => {
                let ds = dataio::load_libsvm(path, *n_features)?;
                if *classification {
                    ds.into_classification()
                } else {
                    Ok(ds)
                }
            }
        }
    }

    /// Resolves a relative LIBSVM path against `base`.
    pub fn rebase(&mut self, base: &Path) {
        if let DataSource::Libsvm { path, .. } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

/// Which split a parameter-sweep curve is read from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricSplit {
    #[default]
    Test,
    Train,
}

fn default_divergence_threshold() -> f64 {
    1e6
}

/// Everything needed to reproduce a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub method: Method,
    /// Ascending parameter values (`k`, `lambda` or `gamma`).
    pub grid: Vec<f64>,
    /// Ensemble sizes.
    pub sizes: Vec<usize>,
    pub folds: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Mini-batch size; full batch when absent.
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Reshuffle mini-batches every epoch.
    #[serde(default)]
    pub shuffle: bool,
    /// Parallel jobs; available parallelism when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    /// A run counts as diverged once its mean training ensemble squared
    /// error exceeds this value (targets are standardised).
    #[serde(default = "default_divergence_threshold")]
    pub divergence_threshold: f64,
    #[serde(default)]
    pub boundary_metric: MetricSplit,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::invalid(format!("config key `{key}`: {msg}")));
        if self.grid.is_empty() {
            return bad("grid", "must not be empty");
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return bad("grid", "values must be finite");
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("grid", "must be strictly ascending");
        }
        if self.sizes.is_empty() {
            return bad("sizes", "must not be empty");
        }
        let min_size = if self.method.is_adjustable() { 2 } else { 1 };
        if self.sizes.iter().any(|&m| m < min_size) {
            return bad(
                "sizes",
                &format!("{} needs ensembles of at least {min_size}", self.method),
            );
        }
        if self.folds < 2 {
            return bad("folds", "must be >= 2");
        }
        if self.epochs < 1 {
            return bad("epochs", "must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be > 0");
        }
        if self.hidden.contains(&0) {
            return bad("hidden", "widths must be >= 1");
        }
        if self.batch_size == Some(0) {
            return bad("batch_size", "must be >= 1");
        }
        if self.workers == Some(0) {
            return bad("workers", "must be >= 1");
        }
        if self.divergence_threshold.is_nan() || self.divergence_threshold <= 0.0 {
            return bad("divergence_threshold", "must be > 0");
        }
        if let DataSource::Synthetic { n, noise_sd, .. } = self.data {
            if n == 0 {
                return bad("data.n", "must be >= 1");
            }
            if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
                return bad("data.noise_sd", "must be finite and >= 0");
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint {
            format: CONFIG_FORMAT.to_string(),
            config: self.clone(),
        }
    }
}

/// Versioned copy of the full configuration, written beside every result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub format: String,
    pub config: ExperimentConfig,
}

/// `lo, lo + step, ...` up to `hi` inclusive, rounded to ten decimals so that
/// grids such as `0:2:0.1` hold the literal values.
pub fn grid_range(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(Error::invalid(format!("bad grid range {lo}:{hi}:{step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| ((lo + i as f64 * step) * 1e10).round() / 1e10)
        .collect())
}
