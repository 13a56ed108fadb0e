use serde::{Deserialize, Serialize};

use crate::dataio::Task;
use crate::matrix::Matrix;

/// Which score a task is judged by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Root mean squared error, lower is better.
    Rmse,
    /// Argmax accuracy, higher is better.
    Acc,
}

impl MetricKind {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Regression => MetricKind::Rmse,
            Task::Classification { .. } => MetricKind::Acc,
        }
    }

    pub fn lower_is_better(self) -> bool {
        self == MetricKind::Rmse
    }

    /// `a` strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.lower_is_better() {
            a < b
        } else {
            a > b
        }
    }

    pub fn score(self, preds: &Matrix, targets: &Matrix) -> f64 {
        match self {
            MetricKind::Rmse => rmse(preds, targets),
            MetricKind::Acc => acc(preds, targets),
        }
    }
}

/// `sqrt(mean((y - t)^2))` over every entry.
pub fn rmse(preds: &Matrix, targets: &Matrix) -> f64 {
    assert_eq!(
        preds.shape(),
        targets.shape(),
        "prediction/target shapes differ"
    );
    let n = preds.as_slice().len() as f64;
    let sse: f64 = preds
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(y, t)| (y - t) * (y - t))
        .sum();
    (sse / n).sqrt()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax matches the one-hot target.
pub fn acc(preds: &Matrix, targets: &Matrix) -> f64 {
    assert_eq!(
        preds.shape(),
        targets.shape(),
        "prediction/target shapes differ"
    );
    let hits = preds
        .iter_rows()
        .zip(targets.iter_rows())
        .filter(|(p, t)| argmax(p) == argmax(t))
        .count();
    hits as f64 / preds.rows() as f64
}
