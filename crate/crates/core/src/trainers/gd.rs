use super::objective::{norm, Objective};
use super::spec::{GdParams, TrainerSpec};
use super::trace::{Minimum, Progress, Termination};
use crate::error::{Error, Result};

/// One momentum update: `Δw = −η ∇E + α Δw_prev`, `w_new = w + Δw`.
pub fn gd_momentum_step(
    params: &[f64],
    gradient: &[f64],
    previous_delta: &[f64],
    learning_rate: f64,
    momentum: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    for (what, v) in [("gradient", gradient), ("previous delta", previous_delta)] {
        if v.len() != params.len() {
            return Err(Error::Dimension {
                what,
                expected: params.len(),
                got: v.len(),
            });
        }
    }
    if !(learning_rate > 0.0) {
        return Err(Error::InvalidHyperparameter {
            name: "learning_rate",
            reason: format!("must be positive, got {learning_rate}"),
        });
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::InvalidHyperparameter {
            name: "momentum",
            reason: format!("must lie in [0, 1), got {momentum}"),
        });
    }
    let delta: Vec<f64> = gradient
        .iter()
        .zip(previous_delta)
        .map(|(g, d)| -learning_rate * g + momentum * d)
        .collect();
    let next = params.iter().zip(&delta).map(|(w, d)| w + d).collect();
    Ok((next, delta))
}

pub(crate) fn run(
    obj: &dyn Objective,
    spec: &TrainerSpec,
    p: GdParams,
    x0: Vec<f64>,
) -> Result<Minimum> {
    let mut x = x0;
    let mut g = vec![0.0; x.len()];
    let loss = obj.loss_and_gradient(&x, &mut g);
    let mut progress = Progress::new(spec, &x, loss)?;
    if let Some(t) = progress.at_start() {
        return Ok(progress.finish(t));
    }
    let mut delta = vec![0.0; x.len()];
    loop {
        if norm(&g) <= spec.gradient_tolerance {
            return Ok(progress.finish(Termination::Converged));
        }
        for ((w, d), gi) in x.iter_mut().zip(delta.iter_mut()).zip(&g) {
            *d = -p.learning_rate * gi + p.momentum * *d;
            *w += *d;
        }
        let loss = obj.loss_and_gradient(&x, &mut g);
        if let Some(t) = progress.record(&x, loss)? {
            return Ok(progress.finish(t));
        }
    }
}
