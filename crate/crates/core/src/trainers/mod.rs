//! Eight training algorithms behind one contract: start point and budget in,
//! best parameters seen plus a per-epoch trace out.

mod gd;
mod lm;
mod objective;
mod pso;
mod quasi_newton;
mod rprop;
mod scg;
mod spec;
mod trace;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use gd::gd_momentum_step;
pub use lm::lm_step;
pub use objective::{FnObjective, LeastSquares, NetworkObjective, Objective, Scaled};
pub use pso::Swarm;
pub use quasi_newton::{bfgs_update, oss_direction, CURVATURE_GUARD};
pub use rprop::RpropState;
pub(crate) use spec::{as_f64, as_usize};
pub use spec::{
    Algorithm, GdParams, LineSearchParams, LmParams, PsoParams, RpropParams, ScgParams,
    TrainerKind, TrainerSpec, DEFAULT_EPOCHS, DEFAULT_STAGNATION_WINDOW,
};
pub use trace::{Minimum, Termination, TrainingTrace};

use crate::error::{Error, Result};
use crate::mlp::{self, NetworkConfig};
use crate::series::PatternSet;

/// A trained network and how it got there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainedModel {
    pub config: NetworkConfig,
    pub params: Vec<f64>,
    pub trainer: TrainerSpec,
    pub trace: TrainingTrace,
    /// Training loss of `params`, recomputed.
    pub final_loss: f64,
}

/// Trains from a random start drawn uniformly on `[-0.5, 0.5]` with the
/// given seed.
pub fn train(
    spec: &TrainerSpec,
    config: NetworkConfig,
    patterns: &PatternSet,
    seed: u64,
) -> Result<TrainedModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = mlp::init_params(&config, &mut rng);
    train_with(spec, config, patterns, start, &mut rng)
}

/// Trains from explicit starting parameters. `seed` only matters for the
/// swarm trainers.
pub fn train_from(
    spec: &TrainerSpec,
    config: NetworkConfig,
    patterns: &PatternSet,
    start: Vec<f64>,
    seed: u64,
) -> Result<TrainedModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    train_with(spec, config, patterns, start, &mut rng)
}

fn train_with(
    spec: &TrainerSpec,
    config: NetworkConfig,
    patterns: &PatternSet,
    start: Vec<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<TrainedModel> {
    let objective = NetworkObjective::new(config, patterns)?;
    let min = minimize_with(spec, &objective, start, rng)?;
    let final_loss = mlp::sse_loss(&config, &min.params, patterns)?;
    Ok(TrainedModel {
        config,
        params: min.params,
        trainer: *spec,
        trace: min.trace,
        final_loss,
    })
}

/// Minimises any [`Objective`] from `start` with the same algorithm bodies
/// used for networks.
pub fn minimize(
    spec: &TrainerSpec,
    objective: &dyn Objective,
    start: Vec<f64>,
    seed: u64,
) -> Result<Minimum> {
    minimize_with(spec, objective, start, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// As [`minimize`], starting from a point drawn uniformly on
/// `[-0.5, 0.5]^D`.
pub fn surrogate_minimize(
    spec: &TrainerSpec,
    objective: &dyn Objective,
    seed: u64,
) -> Result<Minimum> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = (0..objective.dim())
        .map(|_| rng.random_range(-0.5..=0.5))
        .collect();
    minimize_with(spec, objective, start, &mut rng)
}

fn minimize_with<R: Rng>(
    spec: &TrainerSpec,
    obj: &dyn Objective,
    start: Vec<f64>,
    rng: &mut R,
) -> Result<Minimum> {
    spec.validate()?;
    if start.len() != obj.dim() {
        return Err(Error::Dimension {
            what: "start point",
            expected: obj.dim(),
            got: start.len(),
        });
    }
    match spec.algorithm {
        Algorithm::GdMomentum(p) => gd::run(obj, spec, p, start),
        Algorithm::Rprop(p) => rprop::run(obj, spec, p, start),
        Algorithm::Scg(p) => scg::run(obj, spec, p, start),
        Algorithm::Lm(p) => lm::run(obj, spec, p, start),
        Algorithm::Oss(p) => quasi_newton::run_oss(obj, spec, p, start),
        Algorithm::Bfgs(p) => quasi_newton::run_bfgs(obj, spec, p, start),
        Algorithm::PsoTrelea1(p) | Algorithm::PsoTrelea2(p) => pso::run(obj, spec, p, start, rng),
    }
}
