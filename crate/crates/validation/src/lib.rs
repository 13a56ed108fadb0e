//! Reference formulas and reporting for the acceptance suite.
//!
//! The oracles here are written from the defining expressions, not from the
//! library code they check.

use std::time::Duration;

pub mod oracle {
    /// `1 + 1/(M-1)`.
    pub fn lambda_hessian(m: usize) -> f64 {
        1.0 + 1.0 / (m as f64 - 1.0)
    }

    /// `1 + 1/(2(M-1))`.
    pub fn lambda_sea(m: usize) -> f64 {
        1.0 + 0.5 / (m as f64 - 1.0)
    }

    pub fn gamma_hessian(m: usize) -> f64 {
        let l = lambda_hessian(m);
        l * l
    }

    /// `(M^2 - M/2) / (M-1)^2`.
    pub fn gamma_sea(m: usize) -> f64 {
        let mf = m as f64;
        (mf * mf - 0.5 * mf) / ((mf - 1.0) * (mf - 1.0))
    }

    /// Upper end of the SEA `k` interval.
    pub fn k_upper(m: usize) -> f64 {
        (2.0 * m as f64 - 1.0) / (m as f64 - 1.0)
    }

    /// Central differences of `f` at `x`, one coordinate at a time.
    pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|j| {
                probe[j] = x[j] + h;
                let up = f(&probe);
                probe[j] = x[j] - h;
                let down = f(&probe);
                probe[j] = x[j];
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
}

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Option<Duration>,
}

impl Verdict {
    /// Passed on its own terms and within its time budget.
    pub fn ok(&self) -> bool {
        self.passed && self.budget.is_none_or(|b| self.elapsed < b)
    }

    pub fn line(&self) -> String {
        let budget = match self.budget {
            Some(b) if self.elapsed >= b => format!(", over the {} s budget", b.as_secs()),
            Some(b) => format!(" of {} s", b.as_secs()),
            None => String::new(),
        };
        format!(
            "{} criterion {:>2} {}: {} [{:.2} s{budget}]",
            if self.ok() { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::*;
    use super::*;

    #[test]
    fn bounds_at_two() {
        assert_eq!(lambda_hessian(2), 2.0);
        assert_eq!(lambda_sea(2), 1.5);
        assert_eq!(gamma_hessian(2), 4.0);
        assert_eq!(gamma_sea(2), 3.0);
        assert_eq!(k_upper(2), 3.0);
    }

    #[test]
    fn difference_of_quadratic() {
        let g = central_difference(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, 5.0], 1e-3);
        assert!(relative_error(&g, &[4.0, 3.0]) < 1e-10);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn verdict_budget() {
        let v = Verdict {
            id: 1,
            name: "x",
            passed: true,
            detail: String::new(),
            elapsed: Duration::from_secs(2),
            budget: Some(Duration::from_secs(1)),
        };
        assert!(!v.ok());
        assert!(v.line().starts_with("FAIL"));
    }
}
