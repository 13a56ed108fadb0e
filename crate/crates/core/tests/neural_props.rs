use proptest::prelude::*;
use sea_core::gradcheck::{check_network_backward, NETWORK_TOLERANCE};
use sea_core::neural::MlpGradients;
use sea_core::Mlp;

fn net() -> impl Strategy<Value = (Mlp, Vec<f64>)> {
    (
        1usize..6,
        prop::collection::vec(1usize..8, 0..3),
        1usize..4,
        any::<u64>(),
    )
        .prop_flat_map(|(d_in, hidden, d_out, seed)| {
            let mlp = Mlp::new(d_in, &hidden, d_out, seed).unwrap();
            (Just(mlp), prop::collection::vec(-2.0..2.0f64, d_in))
        })
}

proptest! {
    #[test]
    fn forward_is_pure((mlp, x) in net()) {
        let before = mlp.clone();
        let (a, ta) = mlp.forward(&x).unwrap();
        let (b, tb) = mlp.forward(&x).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(ta, tb);
        prop_assert_eq!(mlp, before);
    }

    #[test]
    fn two_half_steps_equal_one_step((mlp, x) in net(), alpha in 0.001..1.0f64) {
        let (y, trace) = mlp.forward(&x).unwrap();
        let delta: Vec<f64> = y.iter().map(|v| v - 0.3).collect();
        let g: MlpGradients = mlp.backward(&trace, &delta).unwrap();
        let mut once = mlp.clone();
        once.sgd_step(&g, alpha).unwrap();
        let mut twice = mlp.clone();
        twice.sgd_step(&g, alpha / 2.0).unwrap();
        twice.sgd_step(&g, alpha / 2.0).unwrap();
        for (a, b) in once.params().iter().zip(twice.params()) {
            prop_assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn backward_matches_finite_differences() {
    for seed in 0..4 {
        let r = check_network_backward(50, seed);
        assert!(r.passed(), "{r}");
        assert_eq!(r.tolerance, NETWORK_TOLERANCE);
    }
}
