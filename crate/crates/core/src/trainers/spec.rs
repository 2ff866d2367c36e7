use serde::{Serialize, Serializer};
use toml::{Table, Value};

use crate::error::{Error, Result};

/// The eight supported training algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrainerKind {
    GdMomentum,
    Rprop,
    Scg,
    Lm,
    Oss,
    Bfgs,
    PsoTrelea1,
    PsoTrelea2,
}

impl TrainerKind {
    pub const ALL: [TrainerKind; 8] = [
        TrainerKind::GdMomentum,
        TrainerKind::Rprop,
        TrainerKind::Scg,
        TrainerKind::Lm,
        TrainerKind::Oss,
        TrainerKind::Bfgs,
        TrainerKind::PsoTrelea1,
        TrainerKind::PsoTrelea2,
    ];

    /// The seven algorithms combined in the reference experiments.
    pub const ENSEMBLE_SEVEN: [TrainerKind; 7] = [
        TrainerKind::Lm,
        TrainerKind::Rprop,
        TrainerKind::Scg,
        TrainerKind::Oss,
        TrainerKind::Bfgs,
        TrainerKind::PsoTrelea1,
        TrainerKind::PsoTrelea2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainerKind::GdMomentum => "gd_momentum",
            TrainerKind::Rprop => "rprop",
            TrainerKind::Scg => "scg",
            TrainerKind::Lm => "lm",
            TrainerKind::Oss => "oss",
            TrainerKind::Bfgs => "bfgs",
            TrainerKind::PsoTrelea1 => "pso_trelea1",
            TrainerKind::PsoTrelea2 => "pso_trelea2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl std::fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for TrainerKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// Gradient descent with momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdParams {
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for GdParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
        }
    }
}

/// Resilient propagation step-size controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpropParams {
    pub delta0: f64,
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub delta_min: f64,
    pub delta_max: f64,
}

impl Default for RpropParams {
    fn default() -> Self {
        Self {
            delta0: 0.07,
            eta_plus: 1.2,
            eta_minus: 0.5,
            delta_min: 1e-6,
            delta_max: 50.0,
        }
    }
}

/// Scaled conjugate gradient: finite-difference step and initial damping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScgParams {
    pub sigma: f64,
    pub lambda: f64,
}

impl Default for ScgParams {
    fn default() -> Self {
        Self {
            sigma: 5e-5,
            lambda: 5e-7,
        }
    }
}

/// Levenberg–Marquardt damping schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmParams {
    pub mu: f64,
    pub mu_factor: f64,
    pub mu_max: f64,
    /// Lower bound applied after each decrease, keeps `μ` from underflowing.
    pub mu_min: f64,
}

impl Default for LmParams {
    fn default() -> Self {
        Self {
            mu: 1e-3,
            mu_factor: 10.0,
            mu_max: 1e10,
            mu_min: 1e-20,
        }
    }
}

/// Backtracking (Armijo) line search shared by BFGS and one-step secant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchParams {
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
        }
    }
}

/// Particle swarm settings. `inertia` and `acceleration` are the `a` and `b`
/// of the velocity update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsoParams {
    pub particles: usize,
    pub inertia: f64,
    pub acceleration: f64,
    pub velocity_clamp: f64,
    pub position_range: f64,
    pub velocity_range: f64,
}

impl PsoParams {
    pub fn trelea1() -> Self {
        Self {
            inertia: 0.6,
            acceleration: 1.7,
            ..Self::trelea2()
        }
    }

    pub fn trelea2() -> Self {
        Self {
            particles: 27,
            inertia: 0.729,
            acceleration: 1.494,
            velocity_clamp: 4.0,
            position_range: 1.0,
            velocity_range: 0.5,
        }
    }
}

/// An algorithm together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    GdMomentum(GdParams),
    Rprop(RpropParams),
    Scg(ScgParams),
    Lm(LmParams),
    Oss(LineSearchParams),
    Bfgs(LineSearchParams),
    PsoTrelea1(PsoParams),
    PsoTrelea2(PsoParams),
}

impl Algorithm {
    pub fn defaults(kind: TrainerKind) -> Self {
        match kind {
            TrainerKind::GdMomentum => Algorithm::GdMomentum(GdParams::default()),
            TrainerKind::Rprop => Algorithm::Rprop(RpropParams::default()),
            TrainerKind::Scg => Algorithm::Scg(ScgParams::default()),
            TrainerKind::Lm => Algorithm::Lm(LmParams::default()),
            TrainerKind::Oss => Algorithm::Oss(LineSearchParams::default()),
            TrainerKind::Bfgs => Algorithm::Bfgs(LineSearchParams::default()),
            TrainerKind::PsoTrelea1 => Algorithm::PsoTrelea1(PsoParams::trelea1()),
            TrainerKind::PsoTrelea2 => Algorithm::PsoTrelea2(PsoParams::trelea2()),
        }
    }

    pub fn kind(&self) -> TrainerKind {
        match self {
            Algorithm::GdMomentum(_) => TrainerKind::GdMomentum,
            Algorithm::Rprop(_) => TrainerKind::Rprop,
            Algorithm::Scg(_) => TrainerKind::Scg,
            Algorithm::Lm(_) => TrainerKind::Lm,
            Algorithm::Oss(_) => TrainerKind::Oss,
            Algorithm::Bfgs(_) => TrainerKind::Bfgs,
            Algorithm::PsoTrelea1(_) => TrainerKind::PsoTrelea1,
            Algorithm::PsoTrelea2(_) => TrainerKind::PsoTrelea2,
        }
    }
}

/// Which algorithm to run, with what settings, for how long.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerSpec {
    pub algorithm: Algorithm,
    /// Full-batch updates (or swarm generations) allowed.
    pub max_epochs: usize,
    /// Stop as soon as the best loss is at or below this value.
    pub loss_floor: f64,
    /// Stop when the best loss improved by less than 1e-12 over this many
    /// epochs. Zero disables the check.
    pub stagnation_window: usize,
    /// Gradient methods stop when the gradient's Euclidean norm is at or
    /// below this value.
    pub gradient_tolerance: f64,
}

pub const DEFAULT_EPOCHS: usize = 2000;
pub const DEFAULT_STAGNATION_WINDOW: usize = 200;
pub(crate) const STAGNATION_EPS: f64 = 1e-12;

impl TrainerSpec {
    pub fn new(kind: TrainerKind) -> Self {
        Self::from_algorithm(Algorithm::defaults(kind))
    }

    pub fn from_algorithm(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            max_epochs: DEFAULT_EPOCHS,
            loss_floor: 0.0,
            stagnation_window: DEFAULT_STAGNATION_WINDOW,
            gradient_tolerance: 0.0,
        }
    }

    pub fn kind(&self) -> TrainerKind {
        self.algorithm.kind()
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.max_epochs = epochs;
        self
    }

    pub fn with_stagnation_window(mut self, window: usize) -> Self {
        self.stagnation_window = window;
        self
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(name: &'static str, reason: impl Into<String>) -> Error {
            Error::InvalidHyperparameter {
                name,
                reason: reason.into(),
            }
        }
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bad(name, format!("must be positive and finite, got {v}")))
            }
        }

        if self.max_epochs == 0 {
            return Err(bad("epochs", "must be at least 1"));
        }
        if !(self.loss_floor >= 0.0) {
            return Err(bad("loss_floor", "must be non-negative"));
        }
        if !(self.gradient_tolerance >= 0.0) {
            return Err(bad("gradient_tolerance", "must be non-negative"));
        }
        match self.algorithm {
            Algorithm::GdMomentum(p) => {
                positive("learning_rate", p.learning_rate)?;
                if !(0.0..1.0).contains(&p.momentum) {
                    return Err(bad(
                        "momentum",
                        format!("must lie in [0, 1), got {}", p.momentum),
                    ));
                }
            }
            Algorithm::Rprop(p) => {
                if !(p.eta_plus > 1.0 && p.eta_minus > 0.0 && p.eta_minus < 1.0) {
                    return Err(bad(
                        "eta_plus/eta_minus",
                        format!(
                            "need eta_plus > 1 > eta_minus > 0, got {} and {}",
                            p.eta_plus, p.eta_minus
                        ),
                    ));
                }
                positive("delta0", p.delta0)?;
                positive("delta_max", p.delta_max)?;
                if !(p.delta_min >= 0.0 && p.delta_min <= p.delta0 && p.delta0 <= p.delta_max) {
                    return Err(bad(
                        "delta_min",
                        "need 0 <= delta_min <= delta0 <= delta_max",
                    ));
                }
            }
            Algorithm::Scg(p) => {
                positive("sigma", p.sigma)?;
                positive("lambda", p.lambda)?;
            }
            Algorithm::Lm(p) => {
                positive("mu", p.mu)?;
                positive("mu_max", p.mu_max)?;
                positive("mu_min", p.mu_min)?;
                if !(p.mu_factor > 1.0) {
                    return Err(bad("mu_factor", "must exceed 1"));
                }
                if !(p.mu_min <= p.mu && p.mu <= p.mu_max) {
                    return Err(bad("mu", "need mu_min <= mu <= mu_max"));
                }
            }
            Algorithm::Oss(p) | Algorithm::Bfgs(p) => {
                if !(p.armijo > 0.0 && p.armijo < 1.0) {
                    return Err(bad("armijo", "must lie in (0, 1)"));
                }
                if !(p.backtrack > 0.0 && p.backtrack < 1.0) {
                    return Err(bad("backtrack", "must lie in (0, 1)"));
                }
                if p.max_backtracks == 0 {
                    return Err(bad("max_backtracks", "must be at least 1"));
                }
            }
            Algorithm::PsoTrelea1(p) | Algorithm::PsoTrelea2(p) => {
                if p.particles < 2 {
                    return Err(bad("particles", "need at least two particles"));
                }
                if !(p.inertia >= 0.0 && p.acceleration >= 0.0) {
                    return Err(bad(
                        "inertia",
                        "inertia and acceleration must be non-negative",
                    ));
                }
                positive("velocity_clamp", p.velocity_clamp)?;
                positive("position_range", p.position_range)?;
                if !(p.velocity_range >= 0.0) {
                    return Err(bad("velocity_range", "must be non-negative"));
                }
            }
        }
        Ok(())
    }

    /// Builds a spec from a config table such as
    /// `{ kind = "rprop", delta0 = 0.1, epochs = 500 }`.
    ///
    /// Recognised keys, besides `kind`:
    ///
    /// * every kind: `epochs`, `loss_floor`, `stagnation_window`, `gradient_tolerance`
    /// * `gd_momentum`: `learning_rate`, `momentum`
    /// * `rprop`: `delta0`, `eta_plus`, `eta_minus`, `delta_min`, `delta_max`
    /// * `scg`: `sigma`, `lambda`
    /// * `lm`: `mu`, `mu_factor`, `mu_max`, `mu_min`
    /// * `bfgs`, `oss`: `armijo`, `backtrack`, `max_backtracks`
    /// * `pso_trelea1`, `pso_trelea2`: `particles`, `inertia`, `acceleration`,
    ///   `velocity_clamp`, `position_range`, `velocity_range`
    ///
    /// `field` prefixes error messages (e.g. `trainers[2]`).
    pub fn from_table(table: &Table, field: &str) -> Result<Self> {
        let kind_name = match table.get("kind") {
            Some(Value::String(s)) => s.as_str(),
            Some(_) => return Err(Error::config(format!("{field}.kind"), "must be a string")),
            None => return Err(Error::config(format!("{field}.kind"), "missing")),
        };
        let kind = TrainerKind::from_name(kind_name).ok_or_else(|| {
            let known: Vec<_> = TrainerKind::ALL.iter().map(|k| k.name()).collect();
            Error::config(
                format!("{field}.kind"),
                format!(
                    "unknown trainer {kind_name:?}; expected one of {}",
                    known.join(", ")
                ),
            )
        })?;
        let mut spec = TrainerSpec::new(kind);
        for (key, value) in table {
            let path = format!("{field}.{key}");
            let f = || as_f64(value, &path);
            let n = || as_usize(value, &path);
            match (key.as_str(), &mut spec.algorithm) {
                ("kind", _) => {}
                ("epochs", _) => spec.max_epochs = n()?,
                ("loss_floor", _) => spec.loss_floor = f()?,
                ("stagnation_window", _) => spec.stagnation_window = n()?,
                ("gradient_tolerance", _) => spec.gradient_tolerance = f()?,
                ("learning_rate", Algorithm::GdMomentum(p)) => p.learning_rate = f()?,
                ("momentum", Algorithm::GdMomentum(p)) => p.momentum = f()?,
                ("delta0", Algorithm::Rprop(p)) => p.delta0 = f()?,
                ("eta_plus", Algorithm::Rprop(p)) => p.eta_plus = f()?,
                ("eta_minus", Algorithm::Rprop(p)) => p.eta_minus = f()?,
                ("delta_min", Algorithm::Rprop(p)) => p.delta_min = f()?,
                ("delta_max", Algorithm::Rprop(p)) => p.delta_max = f()?,
                ("sigma", Algorithm::Scg(p)) => p.sigma = f()?,
                ("lambda", Algorithm::Scg(p)) => p.lambda = f()?,
                ("mu", Algorithm::Lm(p)) => p.mu = f()?,
                ("mu_factor", Algorithm::Lm(p)) => p.mu_factor = f()?,
                ("mu_max", Algorithm::Lm(p)) => p.mu_max = f()?,
                ("mu_min", Algorithm::Lm(p)) => p.mu_min = f()?,
                ("armijo", Algorithm::Bfgs(p) | Algorithm::Oss(p)) => p.armijo = f()?,
                ("backtrack", Algorithm::Bfgs(p) | Algorithm::Oss(p)) => p.backtrack = f()?,
                ("max_backtracks", Algorithm::Bfgs(p) | Algorithm::Oss(p)) => {
                    p.max_backtracks = n()?
                }
                ("particles", Algorithm::PsoTrelea1(p) | Algorithm::PsoTrelea2(p)) => {
                    p.particles = n()?
                }
                ("inertia", Algorithm::PsoTrelea1(p) | Algorithm::PsoTrelea2(p)) => {
                    p.inertia = f()?
                }
                ("acceleration", Algorithm::PsoTrelea1(p) | Algorithm::PsoTrelea2(p)) => {
                    p.acceleration = f()?
                }
                ("velocity_clamp", Algorithm::PsoTrelea1(p) | Algorithm::PsoTrelea2(p)) => {
                    p.velocity_clamp = f()?
                }
                ("position_range", Algorithm::PsoTrelea1(p) | Algorithm::PsoTrelea2(p)) => {
                    p.position_range = f()?
                }
                ("velocity_range", Algorithm::PsoTrelea1(p) | Algorithm::PsoTrelea2(p)) => {
                    p.velocity_range = f()?
                }
                _ => {
                    return Err(Error::config(
                        path,
                        format!("not a recognised setting for trainer {kind_name:?}"),
                    ))
                }
            }
        }
        spec.validate()
            .map_err(|e| Error::config(field.to_string(), e.to_string()))?;
        Ok(spec)
    }

    /// Inverse of [`TrainerSpec::from_table`], with every setting explicit.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new();
        let mut put_f = |k: &str, v: f64| {
            t.insert(k.into(), Value::Float(v));
        };
        match self.algorithm {
            Algorithm::GdMomentum(p) => {
                put_f("learning_rate", p.learning_rate);
                put_f("momentum", p.momentum);
            }
            Algorithm::Rprop(p) => {
                put_f("delta0", p.delta0);
                put_f("eta_plus", p.eta_plus);
                put_f("eta_minus", p.eta_minus);
                put_f("delta_min", p.delta_min);
                put_f("delta_max", p.delta_max);
            }
            Algorithm::Scg(p) => {
                put_f("sigma", p.sigma);
                put_f("lambda", p.lambda);
            }
            Algorithm::Lm(p) => {
                put_f("mu", p.mu);
                put_f("mu_factor", p.mu_factor);
                put_f("mu_max", p.mu_max);
                put_f("mu_min", p.mu_min);
            }
            Algorithm::Oss(p) | Algorithm::Bfgs(p) => {
                put_f("armijo", p.armijo);
                put_f("backtrack", p.backtrack);
            }
            Algorithm::PsoTrelea1(p) | Algorithm::PsoTrelea2(p) => {
                put_f("inertia", p.inertia);
                put_f("acceleration", p.acceleration);
                put_f("velocity_clamp", p.velocity_clamp);
                put_f("position_range", p.position_range);
                put_f("velocity_range", p.velocity_range);
            }
        }
        put_f("loss_floor", self.loss_floor);
        put_f("gradient_tolerance", self.gradient_tolerance);
        match self.algorithm {
            Algorithm::Oss(p) | Algorithm::Bfgs(p) => {
                t.insert(
                    "max_backtracks".into(),
                    Value::Integer(p.max_backtracks as i64),
                );
            }
            Algorithm::PsoTrelea1(p) | Algorithm::PsoTrelea2(p) => {
                t.insert("particles".into(), Value::Integer(p.particles as i64));
            }
            _ => {}
        }
        t.insert("kind".into(), Value::String(self.kind().name().into()));
        t.insert("epochs".into(), Value::Integer(self.max_epochs as i64));
        t.insert(
            "stagnation_window".into(),
            Value::Integer(self.stagnation_window as i64),
        );
        t
    }
}

impl Serialize for TrainerSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_table().serialize(s)
    }
}

pub(crate) fn as_f64(v: &Value, path: &str) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::config(path, "must be a number")),
    }
}

pub(crate) fn as_usize(v: &Value, path: &str) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(Error::config(path, "must be a non-negative integer")),
    }
}
