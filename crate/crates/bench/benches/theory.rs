use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sea_core::theory::{self, BoundReport};
use sea_core::Method;

fn bounds(c: &mut Criterion) {
    c.bench_function("bound_reports_2_to_100", |b| {
        b.iter(|| {
            (2..=100)
                .map(|m| BoundReport::for_size(black_box(m)).unwrap())
                .collect::<Vec<_>>()
        })
    });
}

fn mappings(c: &mut Criterion) {
    let ks: Vec<f64> = (0..1000).map(|i| -0.2 + 2.4 * i as f64 / 999.0).collect();
    c.bench_function("gamma_round_trip_1000", |b| {
        b.iter(|| {
            ks.iter()
                .filter_map(|&k| theory::gamma_from_k(k, 10).ok())
                .map(|g| theory::k_from_gamma(g, 10).unwrap())
                .sum::<f64>()
        })
    });
}

fn std_prediction(c: &mut Criterion) {
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let observed: Vec<f64> = grid.iter().map(|k| 0.2 * (1.0 - 0.8 * k)).collect();
    c.bench_function("predict_std_ncl", |b| {
        b.iter(|| {
            theory::predict_std(Method::Ncl, black_box(&grid), 5, black_box(&observed)).unwrap()
        })
    });
}

criterion_group!(benches, bounds, mappings, std_prediction);
criterion_main!(benches);
