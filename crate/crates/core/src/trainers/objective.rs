use nalgebra::DMatrix;

use crate::error::Result;
use crate::mlp::{self, NetworkConfig};
use crate::series::PatternSet;

/// A differentiable loss over a flat parameter vector.
///
/// Levenberg–Marquardt additionally needs the least-squares structure
/// `loss = ½‖r‖²`; objectives without it return `None` from
/// [`Objective::residuals_and_jacobian`].
pub trait Objective {
    fn dim(&self) -> usize;

    fn loss(&self, x: &[f64]) -> f64;

    /// Writes `∇loss(x)` into `grad` and returns `loss(x)`.
    fn loss_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn residuals_and_jacobian(&self, _x: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
        None
    }
}

/// The network training loss `½ Σ (y − t)²` over a fixed pattern set.
#[derive(Debug, Clone, Copy)]
pub struct NetworkObjective<'a> {
    config: NetworkConfig,
    patterns: &'a PatternSet,
}

impl<'a> NetworkObjective<'a> {
    pub fn new(config: NetworkConfig, patterns: &'a PatternSet) -> Result<Self> {
        // Validates the pattern widths once so the hot paths can skip it.
        mlp::sse_loss(&config, &vec![0.0; config.dim()], patterns)?;
        Ok(Self { config, patterns })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }
}

impl Objective for NetworkObjective<'_> {
    fn dim(&self) -> usize {
        self.config.dim()
    }

    fn loss(&self, x: &[f64]) -> f64 {
        mlp::sse_unchecked(&self.config, x, self.patterns)
    }

    fn loss_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        mlp::loss_grad_unchecked(&self.config, x, self.patterns, grad)
    }

    fn residuals_and_jacobian(&self, x: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
        mlp::residuals_and_jacobian(&self.config, x, self.patterns).ok()
    }
}

/// Objective from a closure computing loss and gradient together.
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, x: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.dim];
        (self.f)(x, &mut scratch)
    }

    fn loss_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(x, grad)
    }
}

/// Least-squares objective `½‖r(x)‖²` from a closure returning residuals and
/// their Jacobian.
pub struct LeastSquares<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> (Vec<f64>, DMatrix<f64>)> LeastSquares<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> (Vec<f64>, DMatrix<f64>)> Objective for LeastSquares<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, x: &[f64]) -> f64 {
        0.5 * (self.f)(x).0.iter().map(|r| r * r).sum::<f64>()
    }

    fn loss_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (r, j) = (self.f)(x);
        for (c, g) in grad.iter_mut().enumerate() {
            *g = j.column(c).iter().zip(&r).map(|(a, b)| a * b).sum();
        }
        0.5 * r.iter().map(|r| r * r).sum::<f64>()
    }

    fn residuals_and_jacobian(&self, x: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
        Some((self.f)(x))
    }
}

/// `c · inner` for a constant `c > 0`. Residuals scale by `√c` so the
/// least-squares form stays consistent.
pub struct Scaled<O> {
    pub inner: O,
    pub factor: f64,
}

impl<O: Objective> Objective for Scaled<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn loss(&self, x: &[f64]) -> f64 {
        self.factor * self.inner.loss(x)
    }

    fn loss_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let loss = self.inner.loss_and_gradient(x, grad);
        grad.iter_mut().for_each(|g| *g *= self.factor);
        self.factor * loss
    }

    fn residuals_and_jacobian(&self, x: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
        let root = self.factor.sqrt();
        self.inner
            .residuals_and_jacobian(x)
            .map(|(r, j)| (r.into_iter().map(|v| v * root).collect(), j * root))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
