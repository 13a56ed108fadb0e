use proptest::prelude::*;
use sea_core::theory::*;
use sea_core::{Error, Method};

proptest! {
    #[test]
    fn mappings_round_trip(k in -0.2..2.2f64, m in 2usize..=100) {
        // The forward maps are undefined at k = -1/(M-1).
        let (Ok(g), Ok(l)) = (gamma_from_k(k, m), lambda_from_k(k, m)) else {
            prop_assert!((k + 1.0 / (m as f64 - 1.0)).abs() < 1e-9);
            return Ok(());
        };
        prop_assert!((k_from_gamma(g, m).unwrap() - k).abs() < 1e-12);
        prop_assert!((k_from_lambda(l, m).unwrap() - k).abs() < 1e-12);
    }

    #[test]
    fn beta_crosses_unit_magnitude_at_the_endpoints(m in 2usize..=200) {
        let b = sea_k_bounds(m).unwrap();
        prop_assert!((beta_from_k(b.lo, m).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((beta_from_k(b.hi, m).unwrap() + 1.0).abs() < 1e-12);
    }
}

#[test]
fn singular_points_are_reported() {
    assert!(matches!(gamma_from_k(-0.25, 5), Err(Error::Singular(_))));
    assert!(matches!(lambda_from_k(-1.0, 2), Err(Error::Singular(_))));
    let (_, lambda_1) = ncl_lambda_bounds(4).unwrap();
    assert!(matches!(
        k_from_lambda(lambda_1, 4),
        Err(Error::Singular(_))
    ));
}

#[test]
fn endpoint_maps_onto_the_tight_bounds() {
    for m in 2..=100 {
        let hi = sea_k_bounds(m).unwrap().hi;
        let (lambda_sea, _) = ncl_lambda_bounds(m).unwrap();
        let (gamma_sea, _) = nclstar_gamma_bounds(m).unwrap();
        assert!(
            (lambda_from_k(hi, m).unwrap() - lambda_sea).abs() < 1e-12,
            "M = {m}"
        );
        assert!(
            (gamma_from_k(hi, m).unwrap() - gamma_sea).abs() < 1e-12,
            "M = {m}"
        );
    }
}

#[test]
fn tight_bounds_are_below_hessian_bounds() {
    for m in 2..=1000 {
        let (lambda_sea, lambda_1) = ncl_lambda_bounds(m).unwrap();
        let (gamma_sea, gamma_1) = nclstar_gamma_bounds(m).unwrap();
        assert!(lambda_sea < lambda_1, "M = {m}");
        assert!(gamma_sea < gamma_1, "M = {m}");
    }
}

#[test]
fn effective_ranges_nest_strictly() {
    for m in 2..=1000 {
        let sea = effective_range(Method::Sea, m).unwrap();
        let ncl = effective_range(Method::Ncl, m).unwrap();
        let star = effective_range(Method::NclStar, m).unwrap();
        assert!(
            sea.contains_interval(&ncl) && ncl.contains_interval(&star),
            "M = {m}"
        );
        assert!(
            star.width() < ncl.width() && ncl.width() < sea.width(),
            "M = {m}"
        );
    }
}

fn second_differences(v: &[f64]) -> Vec<f64> {
    v.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect()
}

#[test]
fn sea_std_is_linear() {
    // Dyadic grid and power-of-two M: every operation is exact, so the
    // differences vanish exactly.
    for m in [2, 4, 8, 16] {
        let grid: Vec<f64> = (0..=16).map(|i| i as f64 / 8.0).collect();
        let v: Vec<f64> = grid
            .iter()
            .map(|&k| predicted_std_sea(k, m, 1.0).unwrap())
            .collect();
        assert!(second_differences(&v).iter().all(|&d| d == 0.0), "M = {m}");
    }
    for m in [2, 3, 5, 8, 20, 100] {
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = grid
            .iter()
            .map(|&k| predicted_std_sea(k, m, 1.0).unwrap())
            .collect();
        assert!(
            second_differences(&v).iter().all(|d| d.abs() < 1e-12),
            "M = {m}"
        );
    }
}

#[test]
fn ncl_std_curvature_is_positive_and_grows_with_m() {
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
    let mut previous: Option<Vec<f64>> = None;
    for m in 2..=30 {
        let v: Vec<f64> = grid
            .iter()
            .map(|&l| predicted_std_ncl(l, m, 1.0).unwrap())
            .collect();
        let d = second_differences(&v);
        assert!(d.iter().all(|&x| x > 0.0), "M = {m}");
        if let Some(p) = &previous {
            assert!(d.iter().zip(p).all(|(a, b)| a > b), "M = {m}");
        }
        previous = Some(d);
    }
}

#[test]
fn fitted_prediction_recovers_a_scaled_shape() {
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
    let truth: Vec<f64> = grid
        .iter()
        .map(|&k| predicted_std_sea(k, 5, 0.37).unwrap())
        .collect();
    let p = predict_std(Method::Sea, &grid, 5, &truth).unwrap();
    assert!((p.scale - 0.37).abs() < 1e-12);
    assert!(relative_rms_deviation(&p.predicted, &truth) < 1e-12);
    assert!((linearity_score(&grid, &truth).unwrap() - 1.0).abs() < 1e-12);
}
