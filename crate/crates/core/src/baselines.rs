//! Linear reference models: AR(p) by least squares and the seasonal
//! MA(1)×MA(1)ₛ model on doubly differenced data, fitted by conditional sum
//! of squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainers::{self, FnObjective, TrainerKind, TrainerSpec};

/// Singular values below this fraction of the largest count as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub order: usize,
    pub intercept: f64,
    /// `φ₁ … φ_p`, coefficient of lag 1 first.
    pub coefficients: Vec<f64>,
    /// Mean squared in-sample residual.
    pub residual_variance: f64,
}

impl ArModel {
    /// `c + Σ φᵢ lags[len − i]`: the prediction following `lags`.
    fn predict_next(&self, lags: &[f64]) -> f64 {
        let n = lags.len();
        self.intercept
            + self
                .coefficients
                .iter()
                .enumerate()
                .map(|(i, phi)| phi * lags[n - 1 - i])
                .sum::<f64>()
    }
}

fn ar_design(values: &[f64], p: usize) -> (DMatrix<f64>, DVector<f64>) {
    let rows = values.len() - p;
    let x = DMatrix::from_fn(
        rows,
        p + 1,
        |r, c| if c == 0 { 1.0 } else { values[r + p - c] },
    );
    let y = DVector::from_fn(rows, |r, _| values[r + p]);
    (x, y)
}

/// Regresses `y_t` on an intercept and `y_{t−1} … y_{t−p}` by ordinary least
/// squares.
pub fn fit_ar(values: &[f64], p: usize) -> Result<ArModel> {
    if p == 0 {
        return Err(Error::InvalidHyperparameter {
            name: "order",
            reason: "must be at least 1".into(),
        });
    }
    if values.len() <= 2 * p + 1 {
        return Err(Error::SeriesTooShort {
            len: values.len(),
            needed: 2 * p + 2,
        });
    }
    let (x, y) = ar_design(values, p);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_TOLERANCE * smax) {
        return Err(Error::RankDeficient {
            condition: smax / smin,
        });
    }
    let beta = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Optimizer(e.to_string()))?;
    let resid = &y - &x * &beta;
    Ok(ArModel {
        order: p,
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        residual_variance: resid.norm_squared() / resid.len() as f64,
    })
}

/// One-step-ahead forecasts for each entry of `actuals`, each using the
/// observed values before it (the tail of `history`, then earlier actuals).
pub fn forecast_ar(model: &ArModel, history: &[f64], actuals: &[f64]) -> Result<Vec<f64>> {
    let p = model.order;
    if history.len() < p {
        return Err(Error::SeriesTooShort {
            len: history.len(),
            needed: p,
        });
    }
    let all = [history, actuals].concat();
    let start = history.len();
    Ok((start..all.len())
        .map(|t| model.predict_next(&all[t - p..t]))
        .collect())
}

/// Values needed to undo a chain of lag differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferencingState {
    /// `(lag, first lag values before that step)`, in application order.
    steps: Vec<(usize, Vec<f64>)>,
}

impl DifferencingState {
    /// Total number of leading observations consumed.
    pub fn consumed(&self) -> usize {
        self.steps.iter().map(|(lag, _)| lag).sum()
    }
}

/// Applies `(1 − L)^d (1 − Lˢ)^D`: `d` first differences, then `D`
/// seasonal differences at period `s`.
pub fn seasonal_difference(
    values: &[f64],
    d: usize,
    seasonal_d: usize,
    s: usize,
) -> Result<(Vec<f64>, DifferencingState)> {
    if seasonal_d > 0 && s == 0 {
        return Err(Error::InvalidHyperparameter {
            name: "period",
            reason: "seasonal differencing needs a period of at least 1".into(),
        });
    }
    let needed = d + seasonal_d * s + 1;
    if values.len() < needed {
        return Err(Error::SeriesTooShort {
            len: values.len(),
            needed,
        });
    }
    let lags = std::iter::repeat_n(1, d).chain(std::iter::repeat_n(s, seasonal_d));
    let mut current = values.to_vec();
    let mut steps = Vec::new();
    for lag in lags {
        steps.push((lag, current[..lag].to_vec()));
        current = (lag..current.len())
            .map(|t| current[t] - current[t - lag])
            .collect();
    }
    Ok((current, DifferencingState { steps }))
}

/// Inverse of [`seasonal_difference`].
pub fn integrate(differenced: &[f64], state: &DifferencingState) -> Vec<f64> {
    let mut current = differenced.to_vec();
    for (lag, initial) in state.steps.iter().rev() {
        let mut out = initial.clone();
        out.reserve(current.len());
        for (i, w) in current.iter().enumerate() {
            let prev = out[i];
            debug_assert_eq!(out.len(), i + lag);
            out.push(w + prev);
        }
        current = out;
    }
    current
}

/// MA(1)×MA(1)ₛ on `(1 − L)(1 − Lˢ) y`:
/// `w_t = ε_t + θ ε_{t−1} + Θ ε_{t−s} + θΘ ε_{t−s−1}`, no intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarimaModel {
    pub period: usize,
    pub theta: f64,
    pub seasonal_theta: f64,
    /// Mean squared residual of the differenced series.
    pub residual_variance: f64,
}

/// Residuals of the MA recursion, with every pre-sample residual zero.
pub fn sarima_residuals(w: &[f64], s: usize, theta: f64, seasonal_theta: f64) -> Vec<f64> {
    let mut e = vec![0.0; w.len()];
    let at = |e: &[f64], t: usize, k: usize| if t >= k { e[t - k] } else { 0.0 };
    for t in 0..w.len() {
        e[t] = w[t]
            - theta * at(&e, t, 1)
            - seasonal_theta * at(&e, t, s)
            - theta * seasonal_theta * at(&e, t, s + 1);
    }
    e
}

/// Conditional sum of squares `Σ ε_t²` and its gradient in `(θ, Θ)`.
pub fn sarima_css(w: &[f64], s: usize, theta: f64, seasonal_theta: f64) -> (f64, [f64; 2]) {
    let n = w.len();
    let (mut e, mut da, mut db) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let at = |v: &[f64], t: usize, k: usize| if t >= k { v[t - k] } else { 0.0 };
    let (a, b) = (theta, seasonal_theta);
    let (mut css, mut ga, mut gb) = (0.0, 0.0, 0.0);
    for t in 0..n {
        let (e1, es, es1) = (at(&e, t, 1), at(&e, t, s), at(&e, t, s + 1));
        e[t] = w[t] - a * e1 - b * es - a * b * es1;
        da[t] = -e1 - a * at(&da, t, 1) - b * at(&da, t, s) - b * es1 - a * b * at(&da, t, s + 1);
        db[t] = -a * at(&db, t, 1) - es - b * at(&db, t, s) - a * es1 - a * b * at(&db, t, s + 1);
        css += e[t] * e[t];
        ga += 2.0 * e[t] * da[t];
        gb += 2.0 * e[t] * db[t];
    }
    (css, [ga, gb])
}

/// Maps an unconstrained value onto `(−1, 1)`.
fn squash(u: f64) -> f64 {
    (0.5 * u).tanh()
}

/// Fits `θ` and `Θ` by minimising the conditional sum of squares of the
/// doubly differenced series with BFGS, under the reparameterisation
/// `θ = tanh(u/2)` that keeps both coefficients inside `(−1, 1)`.
pub fn fit_sarima_ma(values: &[f64], s: usize) -> Result<SarimaModel> {
    if s < 2 {
        return Err(Error::InvalidHyperparameter {
            name: "period",
            reason: format!("seasonal period must be at least 2, got {s}"),
        });
    }
    let needed = 3 * s + s + 1;
    if values.len() < needed {
        return Err(Error::SeriesTooShort {
            len: values.len(),
            needed,
        });
    }
    let (w, _) = seasonal_difference(values, 1, 1, s)?;
    // normalising by the null-model CSS leaves the minimiser unchanged and
    // keeps the unit trial step well scaled
    let scale = w.iter().map(|v| v * v).sum::<f64>();
    if !(scale > 0.0) {
        return Err(Error::RankDeficient {
            condition: f64::INFINITY,
        });
    }
    let objective = FnObjective::new(2, |u: &[f64], grad: &mut [f64]| {
        let (a, b) = (squash(u[0]), squash(u[1]));
        let (css, g) = sarima_css(&w, s, a, b);
        grad[0] = g[0] * 0.5 * (1.0 - a * a) / scale;
        grad[1] = g[1] * 0.5 * (1.0 - b * b) / scale;
        css / scale
    });
    let spec = TrainerSpec::new(TrainerKind::Bfgs).with_epochs(500);
    let min = trainers::minimize(&spec, &objective, vec![0.0, 0.0], 0)?;
    let (theta, seasonal_theta) = (squash(min.params[0]), squash(min.params[1]));
    if !(theta.abs() < 1.0 && seasonal_theta.abs() < 1.0) {
        return Err(Error::Optimizer(format!(
            "fit reached the invertibility boundary (θ = {theta}, Θ = {seasonal_theta})"
        )));
    }
    let (css, _) = sarima_css(&w, s, theta, seasonal_theta);
    Ok(SarimaModel {
        period: s,
        theta,
        seasonal_theta,
        residual_variance: css / w.len() as f64,
    })
}

/// One-step-ahead forecasts of each entry of `actuals`:
/// `ŷ_t = ŵ_t + y_{t−1} + y_{t−s} − y_{t−s−1}` with
/// `ŵ_t = θ ε_{t−1} + Θ ε_{t−s} + θΘ ε_{t−s−1}`, residuals running over
/// the observed data from the start of `history`.
pub fn forecast_sarima(model: &SarimaModel, history: &[f64], actuals: &[f64]) -> Result<Vec<f64>> {
    let s = model.period;
    if history.len() < s + 2 {
        return Err(Error::SeriesTooShort {
            len: history.len(),
            needed: s + 2,
        });
    }
    let y = [history, actuals].concat();
    let (w, _) = seasonal_difference(&y, 1, 1, s)?;
    let e = sarima_residuals(&w, s, model.theta, model.seasonal_theta);
    let offset = s + 1;
    let at = |t: usize, k: usize| if t >= k { e[t - k] } else { 0.0 };
    Ok((history.len()..y.len())
        .map(|t| {
            let i = t - offset;
            let w_hat = model.theta * at(i, 1)
                + model.seasonal_theta * at(i, s)
                + model.theta * model.seasonal_theta * at(i, s + 1);
            w_hat + y[t - 1] + y[t - s] - y[t - s - 1]
        })
        .collect())
}
