use super::objective::Objective;
use super::spec::{RpropParams, TrainerSpec};
use super::trace::{Minimum, Progress};
use crate::error::Result;

/// Per-parameter state of resilient propagation with weight backtracking.
#[derive(Debug, Clone, PartialEq)]
pub struct RpropState {
    pub step_sizes: Vec<f64>,
    pub previous_gradient: Vec<f64>,
    pub previous_update: Vec<f64>,
}

impl RpropState {
    pub fn new(dim: usize, delta0: f64) -> Self {
        Self {
            step_sizes: vec![delta0; dim],
            previous_gradient: vec![0.0; dim],
            previous_update: vec![0.0; dim],
        }
    }

    /// Applies one update to `x` given the current gradient. Only gradient
    /// signs are used.
    pub fn step(&mut self, p: &RpropParams, x: &mut [f64], g: &[f64]) {
        for i in 0..x.len() {
            let agreement = g[i] * self.previous_gradient[i];
            if agreement < 0.0 {
                self.step_sizes[i] = (self.step_sizes[i] * p.eta_minus).max(p.delta_min);
                x[i] -= self.previous_update[i];
                self.previous_update[i] = 0.0;
                self.previous_gradient[i] = 0.0;
                continue;
            }
            if agreement > 0.0 {
                self.step_sizes[i] = (self.step_sizes[i] * p.eta_plus).min(p.delta_max);
            }
            let update = -sign(g[i]) * self.step_sizes[i];
            x[i] += update;
            self.previous_update[i] = update;
            self.previous_gradient[i] = g[i];
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn run(
    obj: &dyn Objective,
    spec: &TrainerSpec,
    p: RpropParams,
    x0: Vec<f64>,
) -> Result<Minimum> {
    let mut x = x0;
    let mut g = vec![0.0; x.len()];
    let loss = obj.loss_and_gradient(&x, &mut g);
    let mut progress = Progress::new(spec, &x, loss)?;
    if let Some(t) = progress.at_start() {
        return Ok(progress.finish(t));
    }
    let mut state = RpropState::new(x.len(), p.delta0);
    loop {
        state.step(&p, &mut x, &g);
        let loss = obj.loss_and_gradient(&x, &mut g);
        if let Some(t) = progress.record(&x, loss)? {
            return Ok(progress.finish(t));
        }
    }
}
