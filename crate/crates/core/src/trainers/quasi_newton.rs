use nalgebra::DMatrix;

use super::objective::{dot, norm, Objective};
use super::spec::{LineSearchParams, TrainerSpec};
use super::trace::{Minimum, Progress, Termination};
use crate::error::Result;

/// Updates below this curvature `sᵀy` are skipped.
pub const CURVATURE_GUARD: f64 = 1e-10;

/// Inverse-Hessian BFGS update
/// `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`, `ρ = 1/sᵀy`.
/// Returns `false` and leaves `h` untouched when `sᵀy ≤ 1e-10`.
pub fn bfgs_update(h: &mut DMatrix<f64>, s: &[f64], y: &[f64]) -> bool {
    let sy = dot(s, y);
    if !(sy > CURVATURE_GUARD) {
        return false;
    }
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| h[(i, j)] * y[j]).sum())
        .collect();
    let yhy = dot(y, &hy);
    let a = rho * (1.0 + rho * yhy);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] += a * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
    true
}

/// Memoryless BFGS (one-step secant) direction `−g + A s + B y`, or `None`
/// when `sᵀy ≤ 1e-10`.
pub fn oss_direction(g: &[f64], s: &[f64], y: &[f64]) -> Option<Vec<f64>> {
    let sy = dot(s, y);
    if !(sy > CURVATURE_GUARD) {
        return None;
    }
    let sg = dot(s, g);
    let yg = dot(y, g);
    let yy = dot(y, y);
    let b = sg / sy;
    let a = -(1.0 + yy / sy) * b + yg / sy;
    Some((0..g.len()).map(|i| -g[i] + a * s[i] + b * y[i]).collect())
}

/// Where the next search direction comes from.
trait Direction {
    fn direction(&mut self, g: &[f64]) -> Vec<f64>;
    fn update(&mut self, s: &[f64], y: &[f64]);
    fn reset(&mut self);
}

struct Bfgs {
    h: DMatrix<f64>,
    steepest_next: bool,
}

impl Direction for Bfgs {
    fn direction(&mut self, g: &[f64]) -> Vec<f64> {
        if std::mem::take(&mut self.steepest_next) {
            return g.iter().map(|v| -v).collect();
        }
        let n = g.len();
        (0..n)
            .map(|i| -(0..n).map(|j| self.h[(i, j)] * g[j]).sum::<f64>())
            .collect()
    }

    fn update(&mut self, s: &[f64], y: &[f64]) {
        if !bfgs_update(&mut self.h, s, y) {
            self.steepest_next = true;
        }
    }

    fn reset(&mut self) {
        self.h.fill_with_identity();
    }
}

#[derive(Default)]
struct Oss {
    last: Option<(Vec<f64>, Vec<f64>)>,
}

impl Direction for Oss {
    fn direction(&mut self, g: &[f64]) -> Vec<f64> {
        self.last
            .take()
            .and_then(|(s, y)| oss_direction(g, &s, &y))
            .unwrap_or_else(|| g.iter().map(|v| -v).collect())
    }

    fn update(&mut self, s: &[f64], y: &[f64]) {
        self.last = Some((s.to_vec(), y.to_vec()));
    }

    fn reset(&mut self) {
        self.last = None;
    }
}

pub(crate) fn run_bfgs(
    obj: &dyn Objective,
    spec: &TrainerSpec,
    ls: LineSearchParams,
    x0: Vec<f64>,
) -> Result<Minimum> {
    let n = x0.len();
    let dir = Bfgs {
        h: DMatrix::identity(n, n),
        steepest_next: false,
    };
    run(obj, spec, ls, x0, dir)
}

pub(crate) fn run_oss(
    obj: &dyn Objective,
    spec: &TrainerSpec,
    ls: LineSearchParams,
    x0: Vec<f64>,
) -> Result<Minimum> {
    run(obj, spec, ls, x0, Oss::default())
}

/// Line-search descent shared by both methods. A direction that fails to
/// descend resets the method to steepest descent.
fn run<D: Direction>(
    obj: &dyn Objective,
    spec: &TrainerSpec,
    ls: LineSearchParams,
    x0: Vec<f64>,
    mut method: D,
) -> Result<Minimum> {
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut loss = obj.loss_and_gradient(&x, &mut g);
    let mut progress = Progress::new(spec, &x, loss)?;
    if let Some(t) = progress.at_start() {
        return Ok(progress.finish(t));
    }
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    loop {
        if norm(&g) <= spec.gradient_tolerance {
            return Ok(progress.finish(Termination::Converged));
        }
        let mut d = method.direction(&g);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            method.reset();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let Some(t) = backtrack(obj, &ls, &x, &d, loss, slope, &mut trial) else {
            return Ok(progress.finish(Termination::LineSearchFailed));
        };
        let new_loss = obj.loss_and_gradient(&trial, &mut g_new);
        let s: Vec<f64> = d.iter().map(|v| t * v).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        method.update(&s, &y);
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        loss = new_loss;
        if let Some(t) = progress.record(&x, loss)? {
            return Ok(progress.finish(t));
        }
    }
}

/// Armijo backtracking from a unit step. Non-finite trial losses count as
/// insufficient decrease. Leaves the accepted point in `trial`.
fn backtrack(
    obj: &dyn Objective,
    ls: &LineSearchParams,
    x: &[f64],
    d: &[f64],
    loss: f64,
    slope: f64,
    trial: &mut [f64],
) -> Option<f64> {
    let mut t = 1.0;
    for _ in 0..=ls.max_backtracks {
        for i in 0..x.len() {
            trial[i] = x[i] + t * d[i];
        }
        let f = obj.loss(trial);
        if f.is_finite() && f <= loss + ls.armijo * t * slope {
            return Some(t);
        }
        t *= ls.backtrack;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_skips_update() {
        let mut h = DMatrix::identity(2, 2);
        assert!(!bfgs_update(&mut h, &[1.0, 0.0], &[-1.0, 0.0]));
        assert!(!bfgs_update(&mut h, &[1.0, 0.0], &[0.0, 1.0]));
        assert_eq!(h, DMatrix::identity(2, 2));
        assert!(oss_direction(&[1.0, 1.0], &[1.0, 0.0], &[-1.0, 0.0]).is_none());
    }

    #[test]
    fn update_satisfies_secant_condition() {
        let mut h = DMatrix::identity(3, 3);
        let s = [0.3, -0.1, 0.7];
        let y = [1.0, 0.2, 0.9];
        assert!(bfgs_update(&mut h, &s, &y));
        for i in 0..3 {
            let hy: f64 = (0..3).map(|j| h[(i, j)] * y[j]).sum();
            assert!((hy - s[i]).abs() < 1e-12);
        }
        assert!((h.clone() - h.transpose()).abs().max() < 1e-15);
    }

    #[test]
    fn oss_matches_memoryless_bfgs() {
        let s = [0.3, -0.1, 0.7];
        let y = [1.0, 0.2, 0.9];
        let g = [0.5, -2.0, 0.25];
        let mut h = DMatrix::identity(3, 3);
        bfgs_update(&mut h, &s, &y);
        let d = oss_direction(&g, &s, &y).unwrap();
        for i in 0..3 {
            let hg: f64 = (0..3).map(|j| h[(i, j)] * g[j]).sum();
            assert!((d[i] + hg).abs() < 1e-12);
        }
    }
}
