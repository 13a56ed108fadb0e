//! Adjustable ensemble training for small multilayer perceptrons: the SEA,
//! NCL and NCL* objectives, their closed-form parameter bounds, and a
//! reproducible cross-validation harness.

pub mod dataio;
pub mod ensemble;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod matrix;
pub mod neural;
pub mod seeds;
pub mod theory;

pub use dataio::{Dataset, NormStats, Task};
pub use ensemble::{Architecture, EnsembleModel, Method, MethodConfig};
pub use error::{Error, Result};
pub use harness::{BoundaryEstimate, ExperimentConfig, MetricKind, SweepResult};
pub use matrix::Matrix;
pub use neural::Mlp;
