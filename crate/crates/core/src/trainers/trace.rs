use serde::Serialize;

use super::spec::{TrainerSpec, STAGNATION_EPS};
use crate::error::{Error, Result};

/// Why a training run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Epoch budget used up.
    Budget,
    /// Best loss reached the configured floor.
    LossFloor,
    /// Best loss stopped improving over the stagnation window.
    Stagnation,
    /// Gradient (or search direction) vanished.
    Converged,
    /// Levenberg–Marquardt damping exceeded its ceiling.
    MuExceeded,
    /// No acceptable step within the backtracking limit.
    LineSearchFailed,
}

/// Per-epoch record of a run. `losses[e]` is the loss of the iterate after
/// epoch `e + 1`; `best[e]` the lowest loss seen up to then, including the
/// starting point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingTrace {
    pub initial_loss: f64,
    pub losses: Vec<f64>,
    pub best: Vec<f64>,
    pub termination: Termination,
}

impl TrainingTrace {
    pub fn epochs(&self) -> usize {
        self.losses.len()
    }

    pub fn best_loss(&self) -> f64 {
        self.best.last().copied().unwrap_or(self.initial_loss)
    }
}

/// Result of a minimisation: best parameters seen and the trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Minimum {
    pub params: Vec<f64>,
    pub loss: f64,
    pub trace: TrainingTrace,
}

/// Best-so-far bookkeeping and the stopping rules shared by every trainer.
pub(crate) struct Progress {
    max_epochs: usize,
    loss_floor: f64,
    window: usize,
    best_x: Vec<f64>,
    best_loss: f64,
    initial_loss: f64,
    losses: Vec<f64>,
    best: Vec<f64>,
}

impl Progress {
    pub(crate) fn new(spec: &TrainerSpec, x0: &[f64], loss0: f64) -> Result<Self> {
        if !loss0.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: 0 });
        }
        Ok(Self {
            max_epochs: spec.max_epochs,
            loss_floor: spec.loss_floor,
            window: spec.stagnation_window,
            best_x: x0.to_vec(),
            best_loss: loss0,
            initial_loss: loss0,
            losses: Vec::new(),
            best: Vec::new(),
        })
    }

    /// `Some` when the starting point already satisfies the loss floor.
    pub(crate) fn at_start(&self) -> Option<Termination> {
        (self.best_loss <= self.loss_floor).then_some(Termination::LossFloor)
    }

    /// Records the iterate reached by the next epoch and reports whether to
    /// stop.
    pub(crate) fn record(&mut self, x: &[f64], loss: f64) -> Result<Option<Termination>> {
        let epoch = self.losses.len() + 1;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_x.copy_from_slice(x);
        }
        self.losses.push(loss);
        self.best.push(self.best_loss);
        Ok(if self.best_loss <= self.loss_floor {
            Some(Termination::LossFloor)
        } else if self.stagnated() {
            Some(Termination::Stagnation)
        } else if epoch >= self.max_epochs {
            Some(Termination::Budget)
        } else {
            None
        })
    }

    fn stagnated(&self) -> bool {
        let e = self.best.len();
        if self.window == 0 || e < self.window {
            return false;
        }
        let before = if e == self.window {
            self.initial_loss
        } else {
            self.best[e - self.window - 1]
        };
        before - self.best_loss < STAGNATION_EPS
    }

    pub(crate) fn finish(self, termination: Termination) -> Minimum {
        Minimum {
            params: self.best_x,
            loss: self.best_loss,
            trace: TrainingTrace {
                initial_loss: self.initial_loss,
                losses: self.losses,
                best: self.best,
                termination,
            },
        }
    }
}
