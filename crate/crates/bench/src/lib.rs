//! Shared fixtures for the criterion benchmarks.

use sea_core::dataio::synth_regression;
use sea_core::{Architecture, Dataset, EnsembleModel, Method, MethodConfig};

/// Standardised synthetic regression set of `n` samples.
pub fn dataset(n: usize) -> Dataset {
    let ds = synth_regression(n, 0.1, 7).expect("valid size");
    sea_core::dataio::standardize(&ds, None)
        .expect("non-empty")
        .0
}

pub fn ensemble(method: Method, param: f64, m: usize, hidden: &[usize]) -> EnsembleModel {
    let arch = Architecture {
        d_in: 2,
        hidden: hidden.to_vec(),
        d_out: 1,
    };
    let seeds: Vec<u64> = (0..m as u64).collect();
    EnsembleModel::new(&arch, MethodConfig::new(method, param), &seeds).expect("valid ensemble")
}
