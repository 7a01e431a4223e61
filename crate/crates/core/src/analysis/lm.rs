//! Damped least squares (Levenberg-Marquardt with Marquardt diagonal scaling).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("{residuals} residuals cannot determine {params} parameters")]
    Underdetermined { residuals: usize, params: usize },
    #[error("non-finite residual or Jacobian")]
    NonFinite,
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative reduction of χ² below which the fit is converged
    pub ftol: f64,
    /// Relative step size below which the fit is converged
    pub xtol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 500, ftol: 1e-15, xtol: 1e-13, initial_lambda: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// `(JᵀJ)⁻¹` at the solution, not scaled by the residual variance
    pub covariance: Option<DMatrix<f64>>,
    pub chi2: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimises `Σ r_i(p)²`.
///
/// `model(p, r, j)` fills the `m` residuals and the `m × len(p)` Jacobian.
pub fn fit<F>(mut model: F, initial: &[f64], m: usize, opts: LmOptions) -> Result<LmFit, LmError>
where
    F: FnMut(&[f64], &mut [f64], &mut DMatrix<f64>),
{
    let n = initial.len();
    if m < n {
        return Err(LmError::Underdetermined { residuals: m, params: n });
    }
    let mut p = initial.to_vec();
    let mut r = vec![0.0; m];
    let mut jac = DMatrix::<f64>::zeros(m, n);
    model(&p, &mut r, &mut jac);
    if r.iter().any(|v| !v.is_finite()) || jac.iter().any(|v| !v.is_finite()) {
        return Err(LmError::NonFinite);
    }
    let mut chi2: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;

    let mut r_try = vec![0.0; m];
    let mut jac_try = DMatrix::<f64>::zeros(m, n);

    while iterations < opts.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * DVector::from_column_slice(&r);
        if chi2 == 0.0 || g.amax() <= 1e-300 {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let p_try: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            model(&p_try, &mut r_try, &mut jac_try);
            let chi2_try: f64 = r_try.iter().map(|v| v * v).sum();
            if chi2_try.is_finite() && chi2_try <= chi2 {
                let rel_f = (chi2 - chi2_try) / chi2.max(1e-300);
                let rel_x = step.iter().zip(&p).map(|(s, v)| s.abs() / (v.abs() + 1e-12)).fold(0.0, f64::max);
                p = p_try;
                std::mem::swap(&mut r, &mut r_try);
                std::mem::swap(&mut jac, &mut jac_try);
                chi2 = chi2_try;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel_f < opts.ftol || rel_x < opts.xtol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
        if converged {
            break;
        }
        if !accepted {
            // no downhill step at any damping: stationary point
            converged = true;
            break;
        }
    }

    let covariance = (jac.transpose() * &jac).try_inverse();
    Ok(LmFit { params: p, covariance, chi2, iterations, converged })
}
