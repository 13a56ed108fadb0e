//! Averaging ensembles of MLPs trained with adjustable losses.
//!
//! For learner `i` with prediction `f_i`, ensemble mean `f_bar` and target
//! `t`, the complementary prediction `g_i = M (t - f_bar) + f_i` is the value
//! that would make the ensemble exact if it replaced `f_i`. The SEA loss
//!
//! ```text
//! e_i = 1/2 || (f_i - t) - k (g_i - t) ||^2
//! ```
//!
//! trades individual error against diversity through `k`. Gradients are taken
//! per learner with `g_i` held fixed; NCL likewise freezes `f_bar`, while NCL*
//! differentiates through it. All losses act per output dimension and are
//! summed.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::neural::{Mlp, MlpCheckpoint, MlpGradients, Trace};
use crate::seeds;
use crate::theory;

pub const ENSEMBLE_FORMAT: &str = "sea-ensemble/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Independent,
    Sea,
    Ncl,
    #[serde(rename = "nclstar")]
    NclStar,
    Bagging,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Independent,
        Method::Sea,
        Method::Ncl,
        Method::NclStar,
        Method::Bagging,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Independent => "independent",
            Method::Sea => "sea",
            Method::Ncl => "ncl",
            Method::NclStar => "nclstar",
            Method::Bagging => "bagging",
        }
    }

    pub fn is_adjustable(self) -> bool {
        matches!(self, Method::Sea | Method::Ncl | Method::NclStar)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| {
                m.name().eq_ignore_ascii_case(s)
                    || (s.eq_ignore_ascii_case("ncl*") && *m == Method::NclStar)
            })
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}

/// Loss family plus its parameter (`k`, `lambda` or `gamma`; ignored by
/// Independent and Bagging).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    pub param: f64,
}

/// Output-space objective a learner follows. Independent and Bagging both
/// train on plain squared error, i.e. SEA with `k = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Objective {
    Sea(f64),
    Ncl(f64),
    NclStar(f64),
}

impl MethodConfig {
    pub fn new(method: Method, param: f64) -> Self {
        MethodConfig { method, param }
    }

    fn objective(&self) -> Objective {
        match self.method {
            Method::Independent | Method::Bagging => Objective::Sea(0.0),
            Method::Sea => Objective::Sea(self.param),
            Method::Ncl => Objective::Ncl(self.param),
            Method::NclStar => Objective::NclStar(self.param),
        }
    }
}

impl fmt::Display for MethodConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.method.is_adjustable() {
            write!(f, "{}({})", self.method, self.param)
        } else {
            write!(f, "{}", self.method)
        }
    }
}

fn check_same_len(a: &[f64], b: &[f64], c: &[f64]) {
    assert!(
        a.len() == b.len() && b.len() == c.len(),
        "output widths differ"
    );
}

/// Mean over the rows of an `M x O` prediction matrix.
pub fn mean_prediction(preds: &Matrix) -> Vec<f64> {
    let m = preds.rows() as f64;
    let mut out = vec![0.0; preds.cols()];
    for row in preds.iter_rows() {
        out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
    }
    out.iter_mut().for_each(|v| *v /= m);
    out
}

/// `g_i = M (t - f_bar) + f_i` for every output dimension.
pub fn complementary_prediction(preds: &Matrix, t: &[f64], i: usize) -> Result<Vec<f64>> {
    if i >= preds.rows() {
        return Err(Error::invalid(format!(
            "learner index {i} out of range for {} learners",
            preds.rows()
        )));
    }
    if t.len() != preds.cols() {
        return Err(Error::dim("target width differs from prediction width"));
    }
    let f_bar = mean_prediction(preds);
    Ok(complementary_from_mean(
        preds.row(i),
        &f_bar,
        t,
        preds.rows(),
    ))
}

fn complementary_from_mean(f_i: &[f64], f_bar: &[f64], t: &[f64], m: usize) -> Vec<f64> {
    let mf = m as f64;
    f_i.iter()
        .zip(f_bar)
        .zip(t)
        .map(|((f, fb), t)| mf * (t - fb) + f)
        .collect()
}

/// `1/2 || (f_i - t) - k (g_i - t) ||^2`
pub fn sea_loss(f_i: &[f64], g_i: &[f64], t: &[f64], k: f64) -> f64 {
    check_same_len(f_i, g_i, t);
    0.5 * f_i
        .iter()
        .zip(g_i)
        .zip(t)
        .map(|((f, g), t)| {
            let r = (f - t) - k * (g - t);
            r * r
        })
        .sum::<f64>()
}

/// `(f_i - t) - k (g_i - t)`, exact with `g_i` held constant.
pub fn sea_output_gradient(f_i: &[f64], g_i: &[f64], t: &[f64], k: f64) -> Vec<f64> {
    check_same_len(f_i, g_i, t);
    f_i.iter()
        .zip(g_i)
        .zip(t)
        .map(|((f, g), t)| (f - t) - k * (g - t))
        .collect()
}

/// `1/2 (f_i - t)^2 + lambda p_i` with `p_i = (f_i - f_bar) sum_{j != i} (f_j - f_bar)`,
/// `f_bar` computed from `preds`.
pub fn ncl_loss(preds: &Matrix, i: usize, t: &[f64], lambda: f64) -> Result<f64> {
    let f_bar = mean_prediction(preds);
    ncl_loss_with_mean(preds, i, &f_bar, t, lambda)
}

/// NCL loss with an explicitly supplied `f_bar`, so that `f_bar` can be held
/// fixed while `f_i` varies.
pub fn ncl_loss_with_mean(
    preds: &Matrix,
    i: usize,
    f_bar: &[f64],
    t: &[f64],
    lambda: f64,
) -> Result<f64> {
    let (m, o) = preds.shape();
    if m < 2 {
        return Err(Error::invalid("NCL needs at least two learners"));
    }
    if i >= m {
        return Err(Error::invalid(format!(
            "learner index {i} out of range for {m} learners"
        )));
    }
    if t.len() != o || f_bar.len() != o {
        return Err(Error::dim(
            "target or mean width differs from prediction width",
        ));
    }
    let mut loss = 0.0;
    for c in 0..o {
        let f_i = preds.get(i, c);
        let others: f64 = (0..m)
            .filter(|&j| j != i)
            .map(|j| preds.get(j, c) - f_bar[c])
            .sum();
        loss += 0.5 * (f_i - t[c]).powi(2) + lambda * (f_i - f_bar[c]) * others;
    }
    Ok(loss)
}

/// `(f_i - t) - lambda (f_i - f_bar)`, with `f_bar` held constant.
pub fn ncl_output_gradient(f_i: &[f64], f_bar: &[f64], t: &[f64], lambda: f64) -> Vec<f64> {
    check_same_len(f_i, f_bar, t);
    f_i.iter()
        .zip(f_bar)
        .zip(t)
        .map(|((f, fb), t)| (f - t) - lambda * (f - fb))
        .collect()
}

/// `1/2 (f_i - t)^2 - gamma/2 (f_i - f_bar)^2`
pub fn nclstar_loss(f_i: &[f64], f_bar: &[f64], t: &[f64], gamma: f64) -> f64 {
    check_same_len(f_i, f_bar, t);
    f_i.iter()
        .zip(f_bar)
        .zip(t)
        .map(|((f, fb), t)| 0.5 * (f - t).powi(2) - 0.5 * gamma * (f - fb).powi(2))
        .sum()
}

/// `(f_i - t) - gamma (1 - 1/M) (f_i - f_bar)`, differentiating through
/// `f_bar`.
pub fn nclstar_output_gradient(
    f_i: &[f64],
    f_bar: &[f64],
    t: &[f64],
    gamma: f64,
    m: usize,
) -> Vec<f64> {
    ncl_output_gradient(f_i, f_bar, t, nclstar_to_ncl(gamma, m))
}

/// The NCL `lambda` whose gradient equals the NCL* gradient at `gamma`:
/// `gamma (M-1) / M`.
pub fn nclstar_to_ncl(gamma: f64, m: usize) -> f64 {
    let mf = m as f64;
    gamma * (mf - 1.0) / mf
}

/// Loss and output gradient of learner `i` under `objective`.
fn learner_terms(
    objective: Objective,
    preds: &Matrix,
    f_bar: &[f64],
    t: &[f64],
    i: usize,
) -> (f64, Vec<f64>) {
    let m = preds.rows();
    let f_i = preds.row(i);
    match objective {
        Objective::Sea(k) => {
            let g_i = complementary_from_mean(f_i, f_bar, t, m);
            (
                sea_loss(f_i, &g_i, t, k),
                sea_output_gradient(f_i, &g_i, t, k),
            )
        }
        Objective::Ncl(lambda) => (
            ncl_loss_with_mean(preds, i, f_bar, t, lambda).expect("shapes checked by caller"),
            ncl_output_gradient(f_i, f_bar, t, lambda),
        ),
        Objective::NclStar(gamma) => (
            nclstar_loss(f_i, f_bar, t, gamma),
            nclstar_output_gradient(f_i, f_bar, t, gamma, m),
        ),
    }
}

/// `m` lists of `n` indices drawn uniformly with replacement from `0..n`.
pub fn bootstrap_indices(n: usize, m: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::invalid("bootstrap needs n >= 1"));
    }
    Ok((0..m)
        .map(|i| {
            let mut rng = seeds::rng(seeds::derive(seed, &[i as u64]));
            (0..n).map(|_| rng.random_range(0..n)).collect()
        })
        .collect())
}

/// Widths of every learner in an ensemble.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub d_in: usize,
    pub hidden: Vec<usize>,
    pub d_out: usize,
}

/// Batch-averaged training diagnostics, measured before the update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// Mean loss of each learner under its method.
    pub learner_loss: Vec<f64>,
    /// Mean of `||f_bar - t||^2`.
    pub ensemble_error: f64,
    /// Mean per-sample prediction std.
    pub std: f64,
}

/// True the first time a given out-of-range `(k, M)` is seen in this
/// process, so sweeps warn once per grid point rather than per fold.
fn first_out_of_range(k: f64, m: usize) -> bool {
    static SEEN: OnceLock<Mutex<HashSet<(u64, usize)>>> = OnceLock::new();
    SEEN.get_or_init(Default::default)
        .lock()
        .map_or(true, |mut seen| seen.insert((k.to_bits(), m)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    learners: Vec<Mlp>,
    config: MethodConfig,
    seeds: Vec<u64>,
    bootstrap: Option<Bootstrap>,
    epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Bootstrap {
    seed: u64,
    indices: Vec<Vec<usize>>,
}

impl EnsembleModel {
    /// One learner per seed. Adjustable methods need at least two learners;
    /// SEA parameters outside the open training interval are accepted with a
    /// warning.
    pub fn new(arch: &Architecture, config: MethodConfig, learner_seeds: &[u64]) -> Result<Self> {
        let m = learner_seeds.len();
        if m == 0 {
            return Err(Error::invalid("an ensemble needs at least one learner"));
        }
        if config.method.is_adjustable() && m < 2 {
            return Err(Error::invalid(format!(
                "{} needs at least two learners",
                config.method
            )));
        }
        if !config.param.is_finite() {
            return Err(Error::invalid("method parameter must be finite"));
        }
        if config.method == Method::Sea {
            let bounds = theory::sea_k_bounds(m)?;
            if !bounds.contains(config.param) && first_out_of_range(config.param, m) {
                log::warn!(
                    "k = {} is outside ({}, {}) for M = {m}; training may not reduce ensemble error",
                    config.param,
                    bounds.lo,
                    bounds.hi
                );
            }
        }
        let learners = learner_seeds
            .iter()
            .map(|&s| Mlp::new(arch.d_in, &arch.hidden, arch.d_out, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleModel {
            learners,
            config,
            seeds: learner_seeds.to_vec(),
            bootstrap: None,
            epoch: 0,
        })
    }

    /// Draws the per-learner resamples Bagging trains on. `n` is the
    /// training set size.
    pub fn with_bootstrap(mut self, n: usize, seed: u64) -> Result<Self> {
        let indices = bootstrap_indices(n, self.learners.len(), seed)?;
        self.bootstrap = Some(Bootstrap { seed, indices });
        Ok(self)
    }

    pub fn learners(&self) -> &[Mlp] {
        &self.learners
    }

    pub fn size(&self) -> usize {
        self.learners.len()
    }

    pub fn config(&self) -> MethodConfig {
        self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn bootstrap(&self) -> Option<&[Vec<usize>]> {
        self.bootstrap.as_ref().map(|b| b.indices.as_slice())
    }

    /// `M x O` matrix of learner outputs.
    pub fn member_predictions(&self, x: &[f64]) -> Matrix {
        let rows: Vec<Vec<f64>> = self.learners.iter().map(|l| l.predict(x)).collect();
        Matrix::from_rows(&rows).expect("learners share output width")
    }

    /// Mean of the learner outputs.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.learners[0].d_in() {
            return Err(Error::dim(format!(
                "input has {} values, ensemble expects {}",
                x.len(),
                self.learners[0].d_in()
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite input"));
        }
        Ok(mean_prediction(&self.member_predictions(x)))
    }

    /// Ensemble predictions (`N x O`) and the mean per-sample prediction std.
    pub fn evaluate(&self, ds: &Dataset) -> Result<(Matrix, f64)> {
        if ds.n_features() != self.learners[0].d_in() || ds.n_outputs() != self.learners[0].d_out()
        {
            return Err(Error::dim("dataset widths do not match the ensemble"));
        }
        let mut out = Matrix::zeros(ds.len(), ds.n_outputs());
        let mut std = 0.0;
        for i in 0..ds.len() {
            let preds = self.member_predictions(ds.x(i));
            std += theory::empirical_std(&preds);
            out.row_mut(i).copy_from_slice(&mean_prediction(&preds));
        }
        Ok((out, std / ds.len() as f64))
    }

    /// One synchronised gradient step over `batch` (indices into `data`).
    ///
    /// Every learner is evaluated on every sample before any update; each
    /// learner's per-sample gradients are averaged over the batch and applied
    /// at the end. Bagging learners replace training position `p` by their
    /// resample `bootstrap[i][p]` and follow plain squared error.
    pub fn train_epoch(
        &mut self,
        data: &Dataset,
        batch: &[usize],
        alpha: f64,
    ) -> Result<StepDiagnostics> {
        if batch.is_empty() {
            return Err(Error::EmptyInput);
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be > 0, got {alpha}"
            )));
        }
        if data.n_features() != self.learners[0].d_in()
            || data.n_outputs() != self.learners[0].d_out()
        {
            return Err(Error::dim("dataset widths do not match the ensemble"));
        }
        if let Some(&bad) = batch.iter().find(|&&i| i >= data.len()) {
            return Err(Error::invalid(format!("batch index {bad} out of range")));
        }
        let bagging = self.config.method == Method::Bagging;
        if bagging {
            match &self.bootstrap {
                Some(b) if b.indices.iter().all(|l| l.len() == data.len()) => {}
                Some(_) => {
                    return Err(Error::dim(
                        "bootstrap resamples do not match the training set",
                    ))
                }
                None => return Err(Error::invalid("bagging requires bootstrap resamples")),
            }
        }

        let m = self.learners.len();
        let objective = self.config.objective();
        let scale = 1.0 / batch.len() as f64;
        let mut grads: Vec<MlpGradients> =
            self.learners.iter().map(MlpGradients::zeros_like).collect();
        let mut learner_loss = vec![0.0; m];
        let mut ensemble_error = 0.0;
        let mut std = 0.0;

        for &s in batch {
            let t = data.t(s);
            let traces: Vec<Trace> = self.learners.iter().map(|l| l.trace(data.x(s))).collect();
            let outs: Vec<&[f64]> = traces.iter().map(|tr| tr.output()).collect();
            let preds = Matrix::from_rows(&outs).expect("shared width");
            let f_bar = mean_prediction(&preds);
            ensemble_error += f_bar
                .iter()
                .zip(t)
                .map(|(f, t)| (f - t) * (f - t))
                .sum::<f64>();
            std += theory::empirical_std(&preds);

            if bagging {
                let boot = &self.bootstrap.as_ref().expect("checked").indices;
                for (i, learner) in self.learners.iter().enumerate() {
                    let r = boot[i][s];
                    let tr = learner.trace(data.x(r));
                    let t_r = data.t(r);
                    let (loss, delta) = learner_terms(
                        Objective::Sea(0.0),
                        &single(tr.output()),
                        tr.output(),
                        t_r,
                        0,
                    );
                    learner_loss[i] += loss;
                    learner.backward_accumulate(&tr, &delta, &mut grads[i])?;
                }
            } else {
                for (i, learner) in self.learners.iter().enumerate() {
                    let (loss, delta) = learner_terms(objective, &preds, &f_bar, t, i);
                    learner_loss[i] += loss;
                    learner.backward_accumulate(&traces[i], &delta, &mut grads[i])?;
                }
            }
        }

        for (i, (learner, g)) in self.learners.iter_mut().zip(&mut grads).enumerate() {
            g.scale(scale);
            learner.sgd_step(g, alpha).map_err(|e| match e {
                Error::Diverged { .. } => Error::Diverged {
                    epoch: self.epoch,
                    learner: i,
                },
                other => other,
            })?;
        }
        self.epoch += 1;
        learner_loss.iter_mut().for_each(|v| *v *= scale);
        Ok(StepDiagnostics {
            learner_loss,
            ensemble_error: ensemble_error * scale,
            std: std * scale,
        })
    }

    pub fn to_checkpoint(&self) -> EnsembleCheckpoint {
        EnsembleCheckpoint {
            format: ENSEMBLE_FORMAT.to_string(),
            config: self.config,
            learner_seeds: self.seeds.clone(),
            bootstrap_seed: self.bootstrap.as_ref().map(|b| b.seed),
            bootstrap_len: self
                .bootstrap
                .as_ref()
                .and_then(|b| b.indices.first().map(Vec::len)),
            epoch: self.epoch,
            learners: self.learners.iter().map(Mlp::to_checkpoint).collect(),
        }
    }

    pub fn from_checkpoint(c: &EnsembleCheckpoint) -> Result<Self> {
        if c.format != ENSEMBLE_FORMAT {
            return Err(Error::invalid(format!(
                "unsupported checkpoint format `{}` (expected `{ENSEMBLE_FORMAT}`)",
                c.format
            )));
        }
        if c.learners.is_empty() || c.learners.len() != c.learner_seeds.len() {
            return Err(Error::invalid(
                "checkpoint learner list does not match its seeds",
            ));
        }
        let learners = c
            .learners
            .iter()
            .map(Mlp::from_checkpoint)
            .collect::<Result<Vec<_>>>()?;
        let (d_in, d_out) = (learners[0].d_in(), learners[0].d_out());
        if learners
            .iter()
            .any(|l| l.d_in() != d_in || l.d_out() != d_out)
        {
            return Err(Error::dim("learners disagree on input/output width"));
        }
        let bootstrap = match (c.bootstrap_seed, c.bootstrap_len) {
            (Some(seed), Some(n)) => Some(Bootstrap {
                seed,
                indices: bootstrap_indices(n, learners.len(), seed)?,
            }),
            _ => None,
        };
        Ok(EnsembleModel {
            learners,
            config: c.config,
            seeds: c.learner_seeds.clone(),
            bootstrap,
            epoch: c.epoch,
        })
    }
}

fn single(row: &[f64]) -> Matrix {
    Matrix::from_vec(1, row.len(), row.to_vec()).expect("one row")
}

/// JSON form of an [`EnsembleModel`]; bootstrap resamples are regenerated
/// from their seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCheckpoint {
    pub format: String,
    pub config: MethodConfig,
    pub learner_seeds: Vec<u64>,
    pub bootstrap_seed: Option<u64>,
    pub bootstrap_len: Option<usize>,
    pub epoch: usize,
    pub learners: Vec<MlpCheckpoint>,
}
