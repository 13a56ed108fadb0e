use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Fingerprint, MetricSplit};
use super::metrics::{argmax, MetricKind};
use crate::dataio::{kfold_split, standardize, Dataset, NormStats, Task};
use crate::ensemble::{Architecture, EnsembleModel, Method, MethodConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seeds;

/// One cross-validation fold, standardised with its training statistics.
#[derive(Debug, Clone)]
pub struct PreparedFold {
    pub index: usize,
    pub train: Dataset,
    pub test: Dataset,
    pub stats: NormStats,
}

/// Splits `ds` into `folds` folds and standardises each from its own
/// training part.
pub fn prepare_folds(ds: &Dataset, folds: usize, master_seed: u64) -> Result<Vec<PreparedFold>> {
    let split = kfold_split(ds.len(), folds, seeds::derive(master_seed, &[seeds::SPLIT]))?;
    (0..folds)
        .map(|f| {
            let (train_idx, test_idx) = split.train_test(f);
            let (train, stats) = standardize(&ds.subset(&train_idx)?, None)?;
            let (test, _) = standardize(&ds.subset(&test_idx)?, Some(&stats))?;
            Ok(PreparedFold {
                index: f,
                train,
                test,
                stats,
            })
        })
        .collect()
}

/// Training hyperparameters shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub batch_size: Option<usize>,
    pub shuffle: bool,
    pub divergence_threshold: f64,
}

impl From<&ExperimentConfig> for TrainOptions {
    fn from(c: &ExperimentConfig) -> Self {
        TrainOptions {
            epochs: c.epochs,
            learning_rate: c.learning_rate,
            hidden: c.hidden.clone(),
            batch_size: c.batch_size,
            shuffle: c.shuffle,
            divergence_threshold: c.divergence_threshold,
        }
    }
}

/// Result of training one ensemble on one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub metric: f64,
    pub train_metric: f64,
    /// Test metric of the untrained ensemble.
    pub initial_metric: f64,
    pub std: f64,
    pub epochs: usize,
    pub diverged: bool,
    /// Mean training ensemble squared error before each epoch's update.
    pub trace: Vec<f64>,
    pub wall_time: Duration,
}

/// Metric of the constant predictor fitted on `train`: the target mean for
/// regression, the majority class for classification.
pub fn baseline_metric(train: &Dataset, eval: &Dataset) -> f64 {
    let kind = MetricKind::for_task(train.task());
    let o = train.n_outputs();
    let constant: Vec<f64> = match train.task() {
        Task::Regression => (0..o)
            .map(|c| train.targets().column(c).iter().sum::<f64>() / train.len() as f64)
            .collect(),
        Task::Classification { classes } => {
            let mut counts = vec![0usize; classes];
            for i in 0..train.len() {
                counts[argmax(train.t(i))] += 1;
            }
            let counts: Vec<f64> = counts.into_iter().map(|c| c as f64).collect();
            let mut row = vec![0.0; classes];
            row[argmax(&counts)] = 1.0;
            row
        }
    };
    let preds = Matrix::from_rows(&vec![constant; eval.len()]).expect("uniform rows");
    kind.score(&preds, eval.targets())
}

/// Learner seeds depend on the master seed, the fold and the learner index
/// only.
pub fn learner_seeds(master_seed: u64, fold: usize, m: usize) -> Vec<u64> {
    (0..m)
        .map(|i| seeds::derive(master_seed, &[seeds::INIT, fold as u64, i as u64]))
        .collect()
}

/// Builds the ensemble a run starts from.
pub fn initial_ensemble(
    fold: &PreparedFold,
    config: MethodConfig,
    m: usize,
    hidden: &[usize],
    master_seed: u64,
) -> Result<EnsembleModel> {
    let arch = Architecture {
        d_in: fold.train.n_features(),
        hidden: hidden.to_vec(),
        d_out: fold.train.n_outputs(),
    };
    let ens = EnsembleModel::new(&arch, config, &learner_seeds(master_seed, fold.index, m))?;
    if config.method == Method::Bagging {
        ens.with_bootstrap(
            fold.train.len(),
            seeds::derive(master_seed, &[seeds::BOOTSTRAP, fold.index as u64]),
        )
    } else {
        Ok(ens)
    }
}

fn batches(
    n: usize,
    opts: &TrainOptions,
    master_seed: u64,
    fold: usize,
    epoch: usize,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if opts.shuffle {
        order.shuffle(&mut seeds::rng(seeds::derive(
            master_seed,
            &[seeds::DATA, fold as u64, epoch as u64],
        )));
    }
    let size = opts.batch_size.unwrap_or(n).min(n);
    order.chunks(size).map(<[usize]>::to_vec).collect()
}

/// Trains an ensemble on `fold.train` and scores it on `fold.test`.
///
/// Divergence (a non-finite update, non-finite predictions, or training
/// ensemble error above the threshold) does not fail the run: the outcome
/// is flagged, its metrics fall back to the constant predictor and its std
/// is infinite.
pub fn train_and_evaluate(
    fold: &PreparedFold,
    config: MethodConfig,
    m: usize,
    opts: &TrainOptions,
    master_seed: u64,
) -> Result<RunOutcome> {
    let start = Instant::now();
    let kind = MetricKind::for_task(fold.train.task());
    let mut ens = initial_ensemble(fold, config, m, &opts.hidden, master_seed)?;
    let (init_preds, _) = ens.evaluate(&fold.test)?;
    let initial_metric = kind.score(&init_preds, fold.test.targets());

    let mut trace = Vec::with_capacity(opts.epochs);
    let mut diverged = false;
    let mut epochs = 0;
    'epochs: for epoch in 0..opts.epochs {
        let mut epoch_error = 0.0;
        let mut seen = 0usize;
        for batch in batches(fold.train.len(), opts, master_seed, fold.index, epoch) {
            match ens.train_epoch(&fold.train, &batch, opts.learning_rate) {
                Ok(d)
                    if d.ensemble_error.is_finite()
                        && d.ensemble_error <= opts.divergence_threshold =>
                {
                    epoch_error += d.ensemble_error * batch.len() as f64;
                    seen += batch.len();
                }
                Ok(_) | Err(Error::Diverged { .. }) => {
                    log::debug!(
                        "{config} M={m} fold {} diverged at epoch {epoch}",
                        fold.index
                    );
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        trace.push(epoch_error / seen as f64);
        epochs = epoch + 1;
    }

    let mut outcome = RunOutcome {
        metric: f64::NAN,
        train_metric: f64::NAN,
        initial_metric,
        std: f64::INFINITY,
        epochs,
        diverged,
        trace,
        wall_time: Duration::ZERO,
    };
    if !diverged {
        let (test_preds, std) = ens.evaluate(&fold.test)?;
        let (train_preds, _) = ens.evaluate(&fold.train)?;
        if test_preds.is_finite() && train_preds.is_finite() && std.is_finite() {
            outcome.metric = kind.score(&test_preds, fold.test.targets());
            outcome.train_metric = kind.score(&train_preds, fold.train.targets());
            outcome.std = std;
        } else {
            outcome.diverged = true;
        }
    }
    if outcome.diverged {
        outcome.metric = baseline_metric(&fold.train, &fold.test);
        outcome.train_metric = baseline_metric(&fold.train, &fold.train);
    }
    outcome.wall_time = start.elapsed();
    Ok(outcome)
}

/// One persisted sweep row.
///
/// Diverged rows carry the constant-predictor metric and an infinite std.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub param: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub fold: usize,
    pub metric: f64,
    pub std: f64,
    pub epochs: usize,
    pub diverged: bool,
    #[serde(skip)]
    pub details: RowDetails,
}

/// Per-row data kept in the JSON sidecar rather than the CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RowDetails {
    pub initial_metric: f64,
    pub train_metric: f64,
    pub trace: Vec<f64>,
    /// Informational; neither persisted nor compared.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl PartialEq for SweepRow {
    fn eq(&self, o: &Self) -> bool {
        self.method == o.method
            && self.param == o.param
            && self.m == o.m
            && self.fold == o.fold
            && self.metric == o.metric
            && self.std == o.std
            && self.epochs == o.epochs
            && self.diverged == o.diverged
            && self.details.initial_metric == o.details.initial_metric
            && self.details.train_metric == o.details.train_metric
            && self.details.trace == o.details.trace
    }
}

impl SweepRow {
    fn from_outcome(config: MethodConfig, m: usize, fold: usize, o: RunOutcome) -> Self {
        SweepRow {
            method: config.method,
            param: config.param,
            m,
            fold,
            metric: o.metric,
            std: o.std,
            epochs: o.epochs,
            diverged: o.diverged,
            details: RowDetails {
                initial_metric: o.initial_metric,
                train_metric: o.train_metric,
                trace: o.trace,
                wall_time: o.wall_time,
            },
        }
    }

    pub fn value(&self, split: MetricSplit) -> f64 {
        match split {
            MetricSplit::Test => self.metric,
            MetricSplit::Train => self.details.train_metric,
        }
    }

    fn sort_key(&self) -> (Method, u64, usize, usize) {
        (self.method, ordered_bits(self.param), self.m, self.fold)
    }
}

/// Order-preserving integer image of a finite float.
fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Mean over folds (and sizes) for one parameter value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub param: f64,
    pub metric: f64,
    pub std: f64,
    pub diverged: usize,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub task: Task,
    pub fingerprint: Fingerprint,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn kind(&self) -> MetricKind {
        MetricKind::for_task(self.task)
    }

    pub fn sort(&mut self) {
        self.rows.sort_by_key(SweepRow::sort_key);
    }

    /// Means per parameter for `method`, restricted to size `m` when given.
    /// Std means skip diverged rows (NaN when every row diverged).
    pub fn aggregate(
        &self,
        method: Method,
        m: Option<usize>,
        split: MetricSplit,
    ) -> Vec<AggregateRow> {
        let mut out: Vec<AggregateRow> = Vec::new();
        let mut rows: Vec<&SweepRow> = self
            .rows
            .iter()
            .filter(|r| r.method == method && m.is_none_or(|m| r.m == m))
            .collect();
        rows.sort_by_key(|r| r.sort_key());
        for group in rows.chunk_by(|a, b| a.param == b.param) {
            let n = group.len() as f64;
            let finite: Vec<f64> = group
                .iter()
                .filter(|r| !r.diverged)
                .map(|r| r.std)
                .collect();
            out.push(AggregateRow {
                param: group[0].param,
                metric: group.iter().map(|r| r.value(split)).sum::<f64>() / n,
                std: if finite.is_empty() {
                    f64::NAN
                } else {
                    finite.iter().sum::<f64>() / finite.len() as f64
                },
                diverged: group.len() - finite.len(),
                runs: group.len(),
            });
        }
        out
    }

    /// `(param, mean metric)` pairs.
    pub fn curve(&self, method: Method, m: Option<usize>, split: MetricSplit) -> Vec<(f64, f64)> {
        self.aggregate(method, m, split)
            .into_iter()
            .map(|a| (a.param, a.metric))
            .collect()
    }

    /// Best aggregated test metric over the parameters accepted by `keep`.
    pub fn best(
        &self,
        method: Method,
        m: Option<usize>,
        keep: impl Fn(f64) -> bool,
    ) -> Option<(f64, f64)> {
        let kind = self.kind();
        self.curve(method, m, MetricSplit::Test)
            .into_iter()
            .filter(|&(p, _)| keep(p))
            .fold(None, |best, (p, v)| match best {
                Some((_, bv)) if !kind.better(v, bv) => best,
                _ => Some((p, v)),
            })
    }
}

/// A loaded dataset with its folds, ready to run any method on.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    pub folds: Vec<PreparedFold>,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let dataset = config.data.load()?;
        Self::with_dataset(config, dataset)
    }

    pub fn with_dataset(config: &ExperimentConfig, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        let folds = prepare_folds(&dataset, config.folds, config.seed)?;
        Ok(Experiment {
            config: config.clone(),
            dataset,
            folds,
        })
    }

    pub fn task(&self) -> Task {
        self.dataset.task()
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = self.config.workers {
            b = b.num_threads(w);
        }
        b.build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))
    }

    /// One row per fold for a single `(method, param, M)` setting.
    pub fn run_cv(&self, method: Method, param: f64, m: usize) -> Result<Vec<SweepRow>> {
        self.run_jobs(&[(MethodConfig::new(method, param), m)])
    }

    /// The full `grid x sizes x folds` product for `method`.
    pub fn run_grid(&self, method: Method, grid: &[f64], sizes: &[usize]) -> Result<SweepResult> {
        let settings: Vec<(MethodConfig, usize)> = grid
            .iter()
            .flat_map(|&p| {
                sizes
                    .iter()
                    .map(move |&m| (MethodConfig::new(method, p), m))
            })
            .collect();
        let mut fingerprint = self.config.fingerprint();
        fingerprint.config.method = method;
        fingerprint.config.grid = grid.to_vec();
        fingerprint.config.sizes = sizes.to_vec();
        let mut result = SweepResult {
            task: self.task(),
            fingerprint,
            rows: self.run_jobs(&settings)?,
        };
        result.sort();
        Ok(result)
    }

    pub fn run_sweep(&self) -> Result<SweepResult> {
        self.run_grid(self.config.method, &self.config.grid, &self.config.sizes)
    }

    fn run_jobs(&self, settings: &[(MethodConfig, usize)]) -> Result<Vec<SweepRow>> {
        let opts = TrainOptions::from(&self.config);
        let jobs: Vec<(MethodConfig, usize, &PreparedFold)> = settings
            .iter()
            .flat_map(|&(c, m)| self.folds.iter().map(move |f| (c, m, f)))
            .collect();
        let seed = self.config.seed;
        self.pool()?.install(|| {
            jobs.par_iter()
                .map(|&(c, m, fold)| {
                    let o = train_and_evaluate(fold, c, m, &opts, seed)?;
                    Ok(SweepRow::from_outcome(c, m, fold.index, o))
                })
                .collect()
        })
    }
}

pub fn run_cv(
    cfg: &ExperimentConfig,
    method: Method,
    param: f64,
    m: usize,
) -> Result<Vec<SweepRow>> {
    Experiment::new(cfg)?.run_cv(method, param, m)
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    Experiment::new(cfg)?.run_sweep()
}

/// A model trained on a whole dataset, as produced by `sea train`.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: EnsembleModel,
    pub stats: NormStats,
    pub trace: Vec<f64>,
    pub train_metric: f64,
}

/// Trains the first grid value and first size of `cfg` on the full
/// standardised dataset.
pub fn train_full(cfg: &ExperimentConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let ds = cfg.data.load()?;
    let (train, stats) = standardize(&ds, None)?;
    let fold = PreparedFold {
        index: 0,
        test: train.clone(),
        train,
        stats,
    };
    let config = MethodConfig::new(cfg.method, cfg.grid[0]);
    let m = cfg.sizes[0];
    let opts = TrainOptions::from(cfg);
    let mut ens = initial_ensemble(&fold, config, m, &cfg.hidden, cfg.seed)?;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut err = 0.0;
        for batch in batches(fold.train.len(), &opts, cfg.seed, 0, epoch) {
            let d = ens.train_epoch(&fold.train, &batch, cfg.learning_rate)?;
            if d.ensemble_error.is_nan() || d.ensemble_error > cfg.divergence_threshold {
                return Err(Error::Diverged { epoch, learner: 0 });
            }
            err += d.ensemble_error * batch.len() as f64;
        }
        trace.push(err / fold.train.len() as f64);
    }
    let (preds, _) = ens.evaluate(&fold.train)?;
    let train_metric = MetricKind::for_task(fold.train.task()).score(&preds, fold.train.targets());
    Ok(TrainedModel {
        model: ens,
        stats: fold.stats,
        trace,
        train_metric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::DataSource;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synthetic {
                n: 100,
                noise_sd: 0.1,
                seed: 3,
            },
            method: Method::Sea,
            grid: vec![0.0, 1.0],
            sizes: vec![3],
            folds: 5,
            epochs: 20,
            learning_rate: 0.2,
            hidden: vec![5],
            seed: 4,
            output_dir: "unused".into(),
            batch_size: None,
            shuffle: false,
            workers: Some(2),
            divergence_threshold: 1e6,
            boundary_metric: MetricSplit::Test,
        }
    }

    #[test]
    fn folds_have_expected_sizes() {
        let e = Experiment::new(&cfg()).unwrap();
        assert_eq!(e.folds.len(), 5);
        assert!(e
            .folds
            .iter()
            .all(|f| f.test.len() == 20 && f.train.len() == 80));
    }

    #[test]
    fn sweep_counts_rows() {
        let mut c = cfg();
        c.folds = 2;
        let r = run_sweep(&c).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert_eq!(r.aggregate(Method::Sea, None, MetricSplit::Test).len(), 2);
    }

    #[test]
    fn run_cv_is_deterministic() {
        let a = run_cv(&cfg(), Method::Sea, 0.5, 3).unwrap();
        let b = run_cv(&cfg(), Method::Sea, 0.5, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn independent_equals_sea_at_zero() {
        let a = run_cv(&cfg(), Method::Independent, 0.0, 3).unwrap();
        let b = run_cv(&cfg(), Method::Sea, 0.0, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.metric, y.metric);
            assert_eq!(x.std, y.std);
            assert_eq!(x.details.trace, y.details.trace);
        }
    }

    #[test]
    fn method_does_not_change_initial_conditions() {
        let e = Experiment::new(&cfg()).unwrap();
        let fold = &e.folds[1];
        let a = initial_ensemble(fold, MethodConfig::new(Method::Sea, 1.3), 4, &[5], 4).unwrap();
        let b = initial_ensemble(fold, MethodConfig::new(Method::Ncl, 0.2), 4, &[5], 4).unwrap();
        let c =
            initial_ensemble(fold, MethodConfig::new(Method::Bagging, 0.0), 4, &[5], 4).unwrap();
        assert_eq!(a.learners(), b.learners());
        assert_eq!(a.learners(), c.learners());
    }

    #[test]
    fn divergent_run_is_flagged_not_fatal() {
        let mut c = cfg();
        c.learning_rate = 5.0;
        c.epochs = 200;
        let rows = run_cv(&c, Method::Sea, 20.0, 3).unwrap();
        assert!(rows.iter().all(|r| r.diverged));
        assert!(rows
            .iter()
            .all(|r| r.metric.is_finite() && r.std.is_infinite()));
    }

    #[test]
    fn mini_batches_cover_the_training_set() {
        let opts = TrainOptions {
            epochs: 1,
            learning_rate: 0.1,
            hidden: vec![],
            batch_size: Some(7),
            shuffle: true,
            divergence_threshold: 1e6,
        };
        let b = batches(20, &opts, 1, 0, 3);
        assert_eq!(b.len(), 3);
        let mut all = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert_eq!(b, batches(20, &opts, 1, 0, 3));
    }

    #[test]
    fn baseline_is_constant_predictor() {
        let ds = crate::dataio::parse_libsvm("1 1:1\n3 1:2\n", None).unwrap();
        assert_eq!(baseline_metric(&ds, &ds), 1.0);
        let cls = crate::dataio::parse_libsvm("0 1:1\n1 1:2\n1 1:3\n", None)
            .unwrap()
            .into_classification()
            .unwrap();
        assert!((baseline_metric(&cls, &cls) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn train_full_reduces_error() {
        let mut c = cfg();
        c.epochs = 100;
        let t = train_full(&c).unwrap();
        assert_eq!(t.trace.len(), 100);
        assert!(t.trace.last().unwrap() < &t.trace[0]);
    }
}
