//! Finite-difference consistency checks for the output-space gradients and
//! network backward pass, as run by `sea gradcheck`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ensemble::{
    mean_prediction, ncl_loss_with_mean, ncl_output_gradient, nclstar_loss,
    nclstar_output_gradient, sea_loss, sea_output_gradient,
};
use crate::matrix::Matrix;
use crate::neural::Mlp;
use crate::seeds;
use crate::theory;

pub const OUTPUT_TOLERANCE: f64 = 1e-8;
pub const NETWORK_TOLERANCE: f64 = 1e-6;
pub const PROPORTIONALITY_TOLERANCE: f64 = 1e-12;

/// Central-difference gradient of `f` at `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub trials: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<28} {:>5} trials  max rel err {:.3e}  (tol {:.0e})  {}",
            self.name,
            self.trials,
            self.max_rel_error,
            self.tolerance,
            if self.passed() { "ok" } else { "FAILED" }
        )
    }
}

/// Random ensemble output state.
struct State {
    preds: Matrix,
    t: Vec<f64>,
}

fn random_state(rng: &mut ChaCha8Rng, max_m: usize, max_o: usize) -> State {
    let m = rng.random_range(2..=max_m);
    let o = rng.random_range(1..=max_o);
    let data = (0..m * o).map(|_| rng.random_range(-2.0..2.0)).collect();
    State {
        preds: Matrix::from_vec(m, o, data).expect("sized"),
        t: (0..o).map(|_| rng.random_range(-2.0..2.0)).collect(),
    }
}

fn with_row(preds: &Matrix, i: usize, row: &[f64]) -> Matrix {
    let mut p = preds.clone();
    p.row_mut(i).copy_from_slice(row);
    p
}

// The losses are quadratic in f_i, so a unit-scale step carries no
// truncation error.
const OUTPUT_STEP: f64 = 1e-3;

/// SEA (`g_i` frozen), NCL (`f_bar` frozen) and NCL* (`f_bar` live) output
/// gradients against central differences of their losses.
pub fn check_output_gradients(trials: usize, seed: u64) -> Vec<CheckReport> {
    let mut rng = seeds::rng(seed);
    let mut worst = [0.0f64; 3];
    for _ in 0..trials {
        let s = random_state(&mut rng, 20, 5);
        let m = s.preds.rows();
        let i = rng.random_range(0..m);
        let f_i = s.preds.row(i).to_vec();
        let f_bar = mean_prediction(&s.preds);
        let g_i: Vec<f64> = f_i
            .iter()
            .zip(&f_bar)
            .zip(&s.t)
            .map(|((f, fb), t)| m as f64 * (t - fb) + f)
            .collect();

        let k = rng.random_range(-0.5..2.5);
        let fd = central_difference(|f| sea_loss(f, &g_i, &s.t, k), &f_i, OUTPUT_STEP);
        worst[0] = worst[0].max(relative_error(
            &sea_output_gradient(&f_i, &g_i, &s.t, k),
            &fd,
        ));

        let lambda = rng.random_range(0.0..1.5);
        let fd = central_difference(
            |f| {
                ncl_loss_with_mean(&with_row(&s.preds, i, f), i, &f_bar, &s.t, lambda)
                    .expect("valid state")
            },
            &f_i,
            OUTPUT_STEP,
        );
        worst[1] = worst[1].max(relative_error(
            &ncl_output_gradient(&f_i, &f_bar, &s.t, lambda),
            &fd,
        ));

        let gamma = rng.random_range(0.0..2.0);
        let fd = central_difference(
            |f| nclstar_loss(f, &mean_prediction(&with_row(&s.preds, i, f)), &s.t, gamma),
            &f_i,
            OUTPUT_STEP,
        );
        worst[2] = worst[2].max(relative_error(
            &nclstar_output_gradient(&f_i, &f_bar, &s.t, gamma, m),
            &fd,
        ));
    }
    [
        "sea output gradient",
        "ncl output gradient",
        "nclstar output gradient",
    ]
    .into_iter()
    .zip(worst)
    .map(|(name, max_rel_error)| CheckReport {
        name,
        trials,
        max_rel_error,
        tolerance: OUTPUT_TOLERANCE,
    })
    .collect()
}

/// `sea_grad(k) = (1 + k(M-1)) * ncl_grad(lambda(k))`.
pub fn check_sea_ncl_proportionality(trials: usize, seed: u64) -> CheckReport {
    let mut rng = seeds::rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let s = random_state(&mut rng, 20, 5);
        let m = s.preds.rows();
        let i = rng.random_range(0..m);
        let lo = -1.0 / (m as f64 - 1.0) + 0.05;
        let k = rng.random_range(lo..2.2);
        let f_i = s.preds.row(i);
        let f_bar = mean_prediction(&s.preds);
        let g_i: Vec<f64> = f_i
            .iter()
            .zip(&f_bar)
            .zip(&s.t)
            .map(|((f, fb), t)| m as f64 * (t - fb) + f)
            .collect();
        let lambda = theory::lambda_from_k(k, m).expect("k above the singularity");
        let factor = 1.0 + k * (m as f64 - 1.0);
        let sea = sea_output_gradient(f_i, &g_i, &s.t, k);
        let ncl: Vec<f64> = ncl_output_gradient(f_i, &f_bar, &s.t, lambda)
            .into_iter()
            .map(|v| v * factor)
            .collect();
        worst = worst.max(relative_error(&sea, &ncl));
    }
    CheckReport {
        name: "sea/ncl proportionality",
        trials,
        max_rel_error: worst,
        tolerance: PROPORTIONALITY_TOLERANCE,
    }
}

/// Backward pass of random small networks against central differences of
/// `<delta, y>`.
pub fn check_network_backward(trials: usize, seed: u64) -> CheckReport {
    let mut rng = seeds::rng(seed);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let d_in = rng.random_range(1..=8);
        let d_out = rng.random_range(1..=8);
        let depth = rng.random_range(0..=3);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=8)).collect();
        let mut net = Mlp::new(d_in, &hidden, d_out, seeds::derive(seed, &[trial as u64]))
            .expect("valid widths");
        let theta: Vec<f64> = net
            .params()
            .iter()
            .map(|p| p * rng.random_range(0.5..2.0))
            .collect();
        net.set_params(&theta).expect("sized");
        let x: Vec<f64> = (0..d_in).map(|_| rng.random_range(-1.0..1.0)).collect();
        let delta: Vec<f64> = (0..d_out).map(|_| rng.random_range(-1.0..1.0)).collect();

        let (_, trace) = net.forward(&x).expect("finite input");
        let analytic = net.backward(&trace, &delta).expect("matching trace").flat();
        let probe = net.clone();
        let fd = central_difference(
            |p| {
                let mut n = probe.clone();
                n.set_params(p).expect("sized");
                n.predict(&x).iter().zip(&delta).map(|(y, d)| y * d).sum()
            },
            &theta,
            1e-6,
        );
        worst = worst.max(relative_error(&analytic, &fd));
    }
    CheckReport {
        name: "network backward",
        trials,
        max_rel_error: worst,
        tolerance: NETWORK_TOLERANCE,
    }
}

/// Every suite with its default trial count.
pub fn run_all(seed: u64) -> Vec<CheckReport> {
    let mut out = check_output_gradients(1000, seeds::derive(seed, &[1]));
    out.push(check_sea_ncl_proportionality(
        1000,
        seeds::derive(seed, &[2]),
    ));
    out.push(check_network_backward(50, seeds::derive(seed, &[3])));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_cubic() {
        let g = central_difference(|x| x[0].powi(3) + 2.0 * x[1], &[1.0, 5.0], 1e-5);
        assert!((g[0] - 3.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1.0], &[1.0]), 0.0);
        assert!((relative_error(&[1.0], &[2.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn all_suites_pass() {
        for r in run_all(17) {
            assert!(r.passed(), "{r}");
        }
    }

    #[test]
    fn wrong_convention_is_detected() {
        // NCL* gradient without the (1 - 1/M) factor must fail the check.
        let mut rng = seeds::rng(5);
        let s = random_state(&mut rng, 4, 2);
        let m = s.preds.rows();
        let f_i = s.preds.row(0).to_vec();
        let f_bar = mean_prediction(&s.preds);
        let fd = central_difference(
            |f| nclstar_loss(f, &mean_prediction(&with_row(&s.preds, 0, f)), &s.t, 1.0),
            &f_i,
            OUTPUT_STEP,
        );
        let naive = ncl_output_gradient(&f_i, &f_bar, &s.t, 1.0);
        assert!(relative_error(&naive, &fd) > 1e-3);
        assert!(
            relative_error(&nclstar_output_gradient(&f_i, &f_bar, &s.t, 1.0, m), &fd)
                < OUTPUT_TOLERANCE
        );
    }
}
