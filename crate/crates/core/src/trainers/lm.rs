use nalgebra::{DMatrix, DVector};

use super::objective::Objective;
use super::spec::{LmParams, TrainerSpec};
use super::trace::{Minimum, Progress, Termination};
use crate::error::{Error, Result};

/// Solves `(JᵀJ + μI) δ = −Jᵀr` by Cholesky factorisation.
pub fn lm_step(jacobian: &DMatrix<f64>, residuals: &[f64], mu: f64) -> Result<Vec<f64>> {
    if residuals.len() != jacobian.nrows() {
        return Err(Error::Dimension {
            what: "residuals",
            expected: jacobian.nrows(),
            got: residuals.len(),
        });
    }
    let jtj = jacobian.transpose() * jacobian;
    let g = jacobian.tr_mul(&DVector::from_column_slice(residuals));
    solve_damped(jtj, &g, mu)
}

fn solve_damped(mut jtj: DMatrix<f64>, g: &DVector<f64>, mu: f64) -> Result<Vec<f64>> {
    for i in 0..jtj.nrows() {
        jtj[(i, i)] += mu;
    }
    let chol = jtj.cholesky().ok_or(Error::LinearSolve { mu })?;
    let step = chol.solve(&(-g));
    if step.iter().all(|v| v.is_finite()) {
        Ok(step.as_slice().to_vec())
    } else {
        Err(Error::LinearSolve { mu })
    }
}

/// One epoch is one accepted step. Within an epoch, rejected steps raise `μ`
/// by `mu_factor` until the loss decreases or `μ` passes `mu_max`.
pub(crate) fn run(
    obj: &dyn Objective,
    spec: &TrainerSpec,
    p: LmParams,
    x0: Vec<f64>,
) -> Result<Minimum> {
    let mut x = x0;
    let (mut r, mut jac) = obj
        .residuals_and_jacobian(&x)
        .ok_or(Error::ResidualsRequired("Levenberg–Marquardt"))?;
    let mut loss = half_sq(&r);
    let mut progress = Progress::new(spec, &x, loss)?;
    if let Some(t) = progress.at_start() {
        return Ok(progress.finish(t));
    }
    let mut mu = p.mu;
    let mut trial = vec![0.0; x.len()];
    loop {
        let g = jac.tr_mul(&DVector::from_column_slice(&r));
        if g.norm() <= spec.gradient_tolerance {
            return Ok(progress.finish(Termination::Converged));
        }
        let jtj = jac.transpose() * &jac;
        loop {
            match solve_damped(jtj.clone(), &g, mu) {
                Ok(step) => {
                    for i in 0..x.len() {
                        trial[i] = x[i] + step[i];
                    }
                    let trial_loss = obj.loss(&trial);
                    if trial_loss < loss {
                        std::mem::swap(&mut x, &mut trial);
                        loss = trial_loss;
                        mu = (mu / p.mu_factor).max(p.mu_min);
                        break;
                    }
                    mu *= p.mu_factor;
                    if mu > p.mu_max {
                        return Ok(progress.finish(Termination::MuExceeded));
                    }
                }
                Err(e) => {
                    mu *= p.mu_factor;
                    if mu > p.mu_max {
                        return Err(e);
                    }
                }
            }
        }
        (r, jac) = obj
            .residuals_and_jacobian(&x)
            .ok_or(Error::ResidualsRequired("Levenberg–Marquardt"))?;
        if let Some(t) = progress.record(&x, loss)? {
            return Ok(progress.finish(t));
        }
    }
}

fn half_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}
