//! Dataset ingestion and preparation: LIBSVM text, standardisation, one-hot
//! targets, k-fold splits and a synthetic regression generator.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seeds;

/// Regression, or classification over `classes` one-hot target columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Task {
    Regression,
    Classification { classes: usize },
}

impl Task {
    pub fn is_classification(self) -> bool {
        matches!(self, Task::Classification { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    targets: Matrix,
    task: Task,
    pub name: String,
}

impl Dataset {
    /// Validates shapes, finiteness and (for classification) the one-hot rows.
    pub fn new(
        features: Matrix,
        targets: Matrix,
        task: Task,
        name: impl Into<String>,
    ) -> Result<Self> {
        let (n, d) = features.shape();
        let (nt, o) = targets.shape();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if d == 0 || o == 0 {
            return Err(Error::dim(
                "datasets need at least one feature and one target column",
            ));
        }
        if n != nt {
            return Err(Error::dim(format!("{n} feature rows but {nt} target rows")));
        }
        if !features.is_finite() || !targets.is_finite() {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        if let Task::Classification { classes } = task {
            if classes != o {
                return Err(Error::dim(format!(
                    "{classes} classes but {o} target columns"
                )));
            }
            for (i, row) in targets.iter_rows().enumerate() {
                let ones = row.iter().filter(|&&v| v == 1.0).count();
                if ones != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::invalid(format!("target row {i} is not one-hot")));
                }
            }
        }
        Ok(Dataset {
            features,
            targets,
            task,
            name: name.into(),
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn targets(&self) -> &Matrix {
        &self.targets
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_outputs(&self) -> usize {
        self.targets.cols()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn t(&self, i: usize) -> &[f64] {
        self.targets.row(i)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!("sample index {bad} out of range")));
        }
        Ok(Dataset {
            features: self.features.select_rows(indices),
            targets: self.targets.select_rows(indices),
            task: self.task,
            name: self.name.clone(),
        })
    }

    /// Converts raw scalar labels into one-hot class targets.
    ///
    /// Distinct label values are mapped to `0..K` in ascending order.
    pub fn into_classification(self) -> Result<Dataset> {
        if self.task.is_classification() {
            return Ok(self);
        }
        if self.n_outputs() != 1 {
            return Err(Error::dim("class labels must be a single target column"));
        }
        let (ids, values) = remap_labels(self.targets.as_slice());
        if values.len() < 2 {
            return Err(Error::invalid("classification needs at least two classes"));
        }
        let targets = one_hot_encode(&ids, values.len())?;
        Dataset::new(
            self.features,
            targets,
            Task::Classification {
                classes: values.len(),
            },
            self.name,
        )
    }
}

/// Maps raw label values to contiguous ids by sorted order of the distinct
/// values. Returns the ids and the sorted distinct values.
pub fn remap_labels(raw: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let mut values: Vec<f64> = raw.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let ids = raw
        .iter()
        .map(|v| {
            values
                .binary_search_by(|p| p.total_cmp(v))
                .expect("value present")
        })
        .collect();
    (ids, values)
}

/// Parses LIBSVM text (`<label> <idx>:<val> ...`, 1-based strictly increasing
/// indices). Labels are kept raw as a single regression target column.
pub fn parse_libsvm(text: &str, n_features: Option<usize>) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut sparse: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("invalid label `{label_tok}`")))?;
        if !label.is_finite() {
            return Err(err(format!("non-finite label `{label_tok}`")));
        }
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected `index:value`, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("invalid feature index in `{tok}`")))?;
            if idx < 1 {
                return Err(err(format!("feature index must be >= 1 in `{tok}`")));
            }
            if idx <= last {
                return Err(err(format!("feature index {idx} is not increasing")));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("invalid feature value in `{tok}`")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite feature value in `{tok}`")));
            }
            last = idx;
            row.push((idx, val));
        }
        max_index = max_index.max(last);
        labels.push(label);
        sparse.push(row);
    }

    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = match n_features {
        Some(d) if d < max_index => {
            return Err(Error::dim(format!(
                "feature index {max_index} exceeds declared width {d}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    if d == 0 {
        return Err(Error::dim("no features present"));
    }
    let mut features = Matrix::zeros(labels.len(), d);
    for (r, row) in sparse.into_iter().enumerate() {
        for (idx, val) in row {
            features.set(r, idx - 1, val);
        }
    }
    let n = labels.len();
    Dataset::new(
        features,
        Matrix::from_vec(n, 1, labels)?,
        Task::Regression,
        "",
    )
}

/// Emits a single-target dataset as LIBSVM text; zero features are omitted.
pub fn to_libsvm(ds: &Dataset) -> Result<String> {
    if ds.n_outputs() != 1 {
        return Err(Error::dim("LIBSVM text holds a single target column"));
    }
    let mut out = String::new();
    for i in 0..ds.len() {
        write!(out, "{}", ds.t(i)[0]).unwrap();
        for (j, &v) in ds.x(i).iter().enumerate() {
            if v != 0.0 {
                write!(out, " {}:{}", j + 1, v).unwrap();
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn load_libsvm(path: &Path, n_features: Option<usize>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ds = parse_libsvm(&text, n_features)?;
    ds.name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(ds)
}

/// Per-column location and scale. Target statistics exist only for
/// regression data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: Option<Vec<f64>>,
    pub target_std: Option<Vec<f64>>,
}

fn column_moments(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    let mut mean = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
    (mean, std)
}

fn apply_moments(m: &mut Matrix, mean: &[f64], std: &[f64]) {
    for r in 0..m.rows() {
        for ((v, mu), sd) in m.row_mut(r).iter_mut().zip(mean).zip(std) {
            if *sd > 0.0 {
                *v = (*v - mu) / sd;
            }
        }
    }
}

impl NormStats {
    pub fn fit(ds: &Dataset) -> NormStats {
        let (feature_mean, feature_std) = column_moments(ds.features());
        let (target_mean, target_std) = match ds.task() {
            Task::Regression => {
                let (m, s) = column_moments(ds.targets());
                (Some(m), Some(s))
            }
            Task::Classification { .. } => (None, None),
        };
        NormStats {
            feature_mean,
            feature_std,
            target_mean,
            target_std,
        }
    }

    /// Maps standardised regression targets back to the original scale.
    pub fn unscale_target(&self, y: &mut [f64]) {
        if let (Some(mean), Some(std)) = (&self.target_mean, &self.target_std) {
            for ((v, mu), sd) in y.iter_mut().zip(mean).zip(std) {
                if *sd > 0.0 {
                    *v = *v * sd + mu;
                }
            }
        }
    }
}

/// Standardises features (and regression targets) with `(x - mean) / std`
/// using population moments. Fits the statistics on `ds` when `stats` is
/// `None`. Constant columns and one-hot targets are left untouched.
pub fn standardize(ds: &Dataset, stats: Option<&NormStats>) -> Result<(Dataset, NormStats)> {
    let stats = match stats {
        Some(s) => {
            if s.feature_mean.len() != ds.n_features() || s.feature_std.len() != ds.n_features() {
                return Err(Error::dim(format!(
                    "statistics cover {} features, dataset has {}",
                    s.feature_mean.len(),
                    ds.n_features()
                )));
            }
            match (ds.task(), &s.target_mean, &s.target_std) {
                (Task::Regression, Some(m), Some(sd))
                    if m.len() == ds.n_outputs() && sd.len() == ds.n_outputs() => {}
                (Task::Classification { .. }, None, None) => {}
                _ => return Err(Error::dim("target statistics do not match the dataset")),
            }
            s.clone()
        }
        None => NormStats::fit(ds),
    };
    let mut features = ds.features().clone();
    apply_moments(&mut features, &stats.feature_mean, &stats.feature_std);
    let mut targets = ds.targets().clone();
    if let (Some(m), Some(s)) = (&stats.target_mean, &stats.target_std) {
        apply_moments(&mut targets, m, s);
    }
    let out = Dataset::new(features, targets, ds.task(), ds.name.clone())?;
    Ok((out, stats))
}

/// One-hot rows for labels already remapped to `0..k`.
pub fn one_hot_encode(labels: &[usize], k: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(labels.len(), k);
    for (r, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::invalid(format!(
                "label {l} out of range for {k} classes"
            )));
        }
        m.set(r, l, 1.0);
    }
    Ok(m)
}

/// Disjoint folds covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub folds: Vec<Vec<usize>>,
}

impl FoldSplit {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Training indices (all other folds, ascending) and test indices for `fold`.
    pub fn train_test(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        let mut test = self.folds[fold].clone();
        test.sort_unstable();
        (train, test)
    }
}

/// Shuffles `0..n` with the seed and deals it into `k` contiguous chunks whose
/// sizes differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 || k > n {
        return Err(Error::invalid(format!(
            "need 2 <= folds <= samples, got {k} folds for {n} samples"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeds::rng(seed));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(FoldSplit { folds })
}

/// `x ~ U[-1, 1]^2`, `t = sin(3 x1) + 0.5 x2^2 + eps`, `eps ~ N(0, noise_sd^2)`.
pub fn synth_regression(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("synthetic dataset needs n >= 1"));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::invalid("noise_sd must be finite and >= 0"));
    }
    let mut rng = seeds::rng(seed);
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
    let mut x = Vec::with_capacity(2 * n);
    let mut t = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = rng.random_range(-1.0..=1.0);
        let x2: f64 = rng.random_range(-1.0..=1.0);
        let eps = if noise_sd > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        x.push(x1);
        x.push(x2);
        t.push(synth_target(x1, x2) + eps);
    }
    Dataset::new(
        Matrix::from_vec(n, 2, x)?,
        Matrix::from_vec(n, 1, t)?,
        Task::Regression,
        "synthetic",
    )
}

/// Noise-free synthetic regression function.
pub fn synth_target(x1: f64, x2: f64) -> f64 {
    (3.0 * x1).sin() + 0.5 * x2 * x2
}
