//! Cross-validated experiments, parameter sweeps and their persisted results.
//!
//! Seeds are split from the master seed by [`crate::seeds::derive`]:
//! fold assignment uses `[SPLIT]`, learner `i` of fold `f` is initialised
//! from `[INIT, f, i]`, bagging resamples from `[BOOTSTRAP, f]` and
//! mini-batch order from `[DATA, f, epoch]`. None of these paths include
//! the method or its parameter, so every method starts from the same
//! splits and weights.

pub mod boundary;
pub mod config;
pub mod diversity;
pub mod metrics;
pub mod persist;
pub mod run;

pub use boundary::{estimate_real_boundary, BoundaryEstimate};
pub use config::{grid_range, DataSource, ExperimentConfig, Fingerprint, MetricSplit};
pub use diversity::{diversity_profile, DiversityProfile};
pub use metrics::{acc, argmax, rmse, MetricKind};
pub use run::{
    run_cv, run_sweep, train_full, AggregateRow, Experiment, RunOutcome, SweepResult, SweepRow,
};
