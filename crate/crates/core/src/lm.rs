//! Levenberg–Marquardt for small dense least-squares problems, with
//! Marquardt's diagonal scaling and Nielsen's damping update.

use nalgebra::{DMatrix, DVector};

pub trait LeastSquares {
    fn n_residuals(&self) -> usize;

    /// Fills `r` with the residuals at `p`.
    fn residuals(&self, p: &[f64], r: &mut DVector<f64>);

    /// Fills `r` and the Jacobian `jac[(k, j)] = ∂r_k/∂p_j`.
    fn residuals_and_jacobian(&self, p: &[f64], r: &mut DVector<f64>, jac: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Absolute threshold on the largest gradient component.
    pub gtol: f64,
    /// Relative loss reduction below which an accepted step counts as stalled.
    pub ftol: f64,
    /// Relative step length below which iteration stops.
    pub xtol: f64,
    /// Absolute loss at or below which the fit is exact for practical purposes.
    pub loss_floor: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 1000,
            gtol: 1e-12,
            ftol: 1e-15,
            xtol: 1e-15,
            loss_floor: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub loss: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub fn minimize<P: LeastSquares>(problem: &P, p0: &[f64], opts: &LmOptions) -> LmOutcome {
    let m = problem.n_residuals();
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = DVector::zeros(m);
    let mut jac = DMatrix::zeros(m, n);
    problem.residuals_and_jacobian(&p, &mut r, &mut jac);
    let mut loss = r.norm_squared();
    if !loss.is_finite() {
        return LmOutcome {
            params: p,
            loss,
            converged: false,
            iterations: 0,
        };
    }

    let mut r_trial = DVector::zeros(m);
    let mut lambda: Option<f64> = None;
    let mut nu = 2.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if loss <= opts.loss_floor {
            converged = true;
            break;
        }
        let a = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if grad.amax() <= opts.gtol {
            converged = true;
            break;
        }
        let diag: Vec<f64> = (0..n).map(|j| a[(j, j)].max(1e-300)).collect();
        let lam = *lambda.get_or_insert_with(|| 1e-3 * diag.iter().cloned().fold(0.0, f64::max));

        iterations += 1;
        let mut damped = a.clone();
        for j in 0..n {
            damped[(j, j)] += lam * diag[j];
        }
        let Some(chol) = damped.cholesky() else {
            lambda = Some(lam * nu);
            nu *= 2.0;
            continue;
        };
        let delta = chol.solve(&(-&grad));
        let p_norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if delta.norm() <= opts.xtol * (p_norm + opts.xtol) {
            converged = true;
            break;
        }

        let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(x, d)| x + d).collect();
        problem.residuals(&trial, &mut r_trial);
        let loss_trial = r_trial.norm_squared();
        let scaled: f64 = (0..n).map(|j| lam * diag[j] * delta[j] * delta[j]).sum();
        let predicted = scaled - delta.dot(&grad);
        let rho = if predicted > 0.0 {
            (loss - loss_trial) / predicted
        } else {
            -1.0
        };

        if loss_trial.is_finite() && rho > 0.0 {
            let reduction = loss - loss_trial;
            p = trial;
            problem.residuals_and_jacobian(&p, &mut r, &mut jac);
            loss = r.norm_squared();
            lambda = Some(lam * (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3)));
            nu = 2.0;
            if reduction <= opts.ftol * loss {
                converged = true;
                break;
            }
        } else {
            lambda = Some(lam * nu);
            nu *= 2.0;
            if !lambda.unwrap().is_finite() {
                break;
            }
        }
    }

    LmOutcome {
        params: p,
        loss,
        converged,
        iterations,
    }
}
