use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative χ² change below which the fit is converged.
    pub tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 200, tolerance: 1e-10, initial_lambda: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    pub chi2: f64,
    /// (JᵀJ)⁻¹ of the weighted residuals.
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

/// Weighted residuals r = (y − f)/σ and the Jacobian ∂f/∂p / σ.
pub trait Problem {
    fn n_params(&self) -> usize;
    fn evaluate(&self, p: &[f64]) -> (Vec<f64>, DMatrix<f64>);
    /// Reject parameter vectors outside the physical domain.
    fn admissible(&self, _p: &[f64]) -> bool {
        true
    }
}

fn chi2(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Levenberg–Marquardt with Marquardt's diagonal scaling.
pub fn levenberg_marquardt(problem: &impl Problem, start: &[f64], opts: LmOptions) -> Result<LmResult> {
    let n = problem.n_params();
    let mut p = start.to_vec();
    let (mut r, mut j) = problem.evaluate(&p);
    let mut current = chi2(&r);
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iterations {
        it += 1;
        let jtj = j.transpose() * &j;
        let rv = DVector::from_column_slice(&r);
        let grad = j.transpose() * rv;
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-30);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, s)| x + s).collect();
            if !problem.admissible(&trial) {
                lambda *= 10.0;
                continue;
            }
            let (tr, tj) = problem.evaluate(&trial);
            let tc = chi2(&tr);
            if tc.is_finite() && tc <= current {
                let rel = (current - tc) / current.max(1e-300);
                let small_step = step.iter().zip(&trial).all(|(s, x)| s.abs() <= 1e-10 * (x.abs() + 1e-30));
                p = trial;
                r = tr;
                j = tj;
                current = tc;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < opts.tolerance || small_step {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: at a minimum to working precision.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations: it, chi2: current, best: p });
    }
    let jtj = j.transpose() * &j;
    let covariance = jtj
        .clone()
        .try_inverse()
        .or_else(|| jtj.pseudo_inverse(1e-14).ok())
        .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
    Ok(LmResult { params: p, chi2: current, covariance, iterations: it, residuals: r })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Exp {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl Problem for Exp {
        fn n_params(&self) -> usize {
            2
        }
        fn evaluate(&self, p: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
            let r = self.x.iter().zip(&self.y).map(|(x, y)| y - p[0] * (-p[1] * x).exp()).collect();
            let j = DMatrix::from_fn(self.x.len(), 2, |i, k| {
                let e = (-p[1] * self.x[i]).exp();
                if k == 0 { e } else { -p[0] * self.x[i] * e }
            });
            (r, j)
        }
    }

    #[test]
    fn recovers_exponential() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|x| 2.5 * (-1.3 * x).exp()).collect();
        let fit = levenberg_marquardt(&Exp { x, y }, &[1.0, 0.5], LmOptions::default()).unwrap();
        assert!((fit.params[0] - 2.5).abs() < 1e-8 && (fit.params[1] - 1.3).abs() < 1e-8);
    }

    #[test]
    fn reports_non_convergence() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|x| 2.5 * (-1.3 * x).exp() + 0.01 * (7.0 * x).sin()).collect();
        let opts = LmOptions { max_iterations: 1, ..LmOptions::default() };
        match levenberg_marquardt(&Exp { x, y }, &[0.1, 5.0], opts) {
            Err(Error::NoConvergence { best, .. }) => assert_eq!(best.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
