use super::objective::{dot, norm, Objective};
use super::spec::{ScgParams, TrainerSpec};
use super::trace::{Minimum, Progress, Termination};
use crate::error::Result;

const LAMBDA_MAX: f64 = 1e100;

/// Møller's scaled conjugate gradient. The curvature along `p` comes from a
/// finite difference of gradients; `λ` keeps the scaled curvature positive
/// and is adjusted from the ratio of actual to predicted reduction.
pub(crate) fn run(
    obj: &dyn Objective,
    spec: &TrainerSpec,
    sp: ScgParams,
    x0: Vec<f64>,
) -> Result<Minimum> {
    let dim = x0.len();
    let mut w = x0;
    let mut g = vec![0.0; dim];
    let mut loss = obj.loss_and_gradient(&w, &mut g);
    let mut progress = Progress::new(spec, &w, loss)?;
    if let Some(t) = progress.at_start() {
        return Ok(progress.finish(t));
    }
    if norm(&g) <= spec.gradient_tolerance {
        return Ok(progress.finish(Termination::Converged));
    }

    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut p = r.clone();
    let mut lambda = sp.lambda;
    let mut lambda_bar = 0.0;
    let mut success = true;
    let mut accepted = 0usize;
    let mut pp = 0.0;
    let mut delta = 0.0;
    let mut probe = vec![0.0; dim];
    let mut g_probe = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut g_trial = vec![0.0; dim];

    loop {
        if success {
            pp = dot(&p, &p);
            if pp == 0.0 {
                return Ok(progress.finish(Termination::Converged));
            }
            let sigma_k = sp.sigma / pp.sqrt();
            for i in 0..dim {
                probe[i] = w[i] + sigma_k * p[i];
            }
            obj.loss_and_gradient(&probe, &mut g_probe);
            delta = (0..dim).map(|i| p[i] * (g_probe[i] - g[i]) / sigma_k).sum();
        }

        delta += (lambda - lambda_bar) * pp;
        if delta <= 0.0 {
            lambda_bar = 2.0 * (lambda - delta / pp);
            delta = -delta + lambda * pp;
            lambda = lambda_bar;
        }

        let mu = dot(&p, &r);
        if mu == 0.0 || !delta.is_finite() {
            return Ok(progress.finish(Termination::Converged));
        }
        let alpha = mu / delta;
        for i in 0..dim {
            trial[i] = w[i] + alpha * p[i];
        }
        let trial_loss = obj.loss_and_gradient(&trial, &mut g_trial);
        let comparison = if trial_loss.is_finite() {
            2.0 * delta * (loss - trial_loss) / (mu * mu)
        } else {
            f64::NEG_INFINITY
        };

        if comparison >= 0.0 {
            std::mem::swap(&mut w, &mut trial);
            std::mem::swap(&mut g, &mut g_trial);
            loss = trial_loss;
            lambda_bar = 0.0;
            success = true;
            accepted += 1;
            let r_new: Vec<f64> = g.iter().map(|v| -v).collect();
            if accepted.is_multiple_of(dim) {
                p.copy_from_slice(&r_new);
            } else {
                let beta = (dot(&r_new, &r_new) - dot(&r_new, &r)) / mu;
                for i in 0..dim {
                    p[i] = r_new[i] + beta * p[i];
                }
            }
            r = r_new;
            if comparison >= 0.75 {
                lambda *= 0.25;
            }
        } else {
            lambda_bar = lambda;
            success = false;
        }
        if comparison < 0.25 {
            let increase = if comparison.is_finite() {
                delta * (1.0 - comparison) / pp
            } else {
                // a non-finite trial: back off hard
                4.0 * lambda.max(sp.lambda)
            };
            lambda = (lambda + increase).min(LAMBDA_MAX);
        }

        if let Some(t) = progress.record(&w, loss)? {
            return Ok(progress.finish(t));
        }
        if success && norm(&g) <= spec.gradient_tolerance {
            return Ok(progress.finish(Termination::Converged));
        }
    }
}
