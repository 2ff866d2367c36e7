//! Single-hidden-layer perceptron `(p, h, q)` with logistic hidden units and
//! identity outputs.
//!
//! Parameters live in one flat vector of length `D = h(p + q + 1) + q`,
//! laid out as:
//!
//! | block            | shape   | flat index of element              |
//! |------------------|---------|------------------------------------|
//! | hidden weights   | `p × h` | `i * h + j`                        |
//! | hidden biases    | `h`     | `p*h + j`                          |
//! | output weights   | `h × q` | `p*h + h + j * q + k`              |
//! | output biases    | `q`     | `p*h + h + h*q + k`                |
//!
//! where `i` indexes inputs, `j` hidden units and `k` outputs. The layout is
//! part of the checkpoint format and must not change.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::PatternSet;

/// Network topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl NetworkConfig {
    pub fn new(inputs: usize, hidden: usize, outputs: usize) -> Result<Self> {
        if inputs == 0 || hidden == 0 || outputs == 0 {
            return Err(Error::InvalidNetwork(format!(
                "({inputs}, {hidden}, {outputs}): every layer needs at least one node"
            )));
        }
        Ok(Self {
            inputs,
            hidden,
            outputs,
        })
    }

    /// Seasonal `(s, h, s)` network.
    pub fn seasonal(period: usize, hidden: usize) -> Result<Self> {
        Self::new(period, hidden, period)
    }

    /// Number of free parameters, `h(p + q + 1) + q`.
    pub fn dim(&self) -> usize {
        self.hidden * (self.inputs + self.outputs + 1) + self.outputs
    }

    pub fn is_seasonal(&self) -> bool {
        self.outputs > 1 && self.outputs == self.inputs
    }

    fn offsets(&self) -> Offsets {
        let (p, h, q) = (self.inputs, self.hidden, self.outputs);
        Offsets {
            hidden_bias: p * h,
            output_weights: p * h + h,
            output_bias: p * h + h + h * q,
        }
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.dim() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: self.dim(),
                got: params.len(),
            });
        }
        Ok(())
    }

    fn check_patterns(&self, patterns: &PatternSet) -> Result<()> {
        if patterns.input_width() != self.inputs {
            return Err(Error::Dimension {
                what: "pattern inputs",
                expected: self.inputs,
                got: patterns.input_width(),
            });
        }
        if patterns.output_width() != self.outputs {
            return Err(Error::Dimension {
                what: "pattern targets",
                expected: self.outputs,
                got: patterns.output_width(),
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for NetworkConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.inputs, self.hidden, self.outputs)
    }
}

#[derive(Clone, Copy)]
struct Offsets {
    hidden_bias: usize,
    output_weights: usize,
    output_bias: usize,
}

/// Per-layer view of a parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layers {
    /// `inputs × hidden`
    pub hidden_weights: Vec<Vec<f64>>,
    pub hidden_bias: Vec<f64>,
    /// `hidden × outputs`
    pub output_weights: Vec<Vec<f64>>,
    pub output_bias: Vec<f64>,
}

impl Layers {
    pub fn from_flat(config: &NetworkConfig, params: &[f64]) -> Result<Self> {
        config.check_params(params)?;
        let (h, q) = (config.hidden, config.outputs);
        let o = config.offsets();
        Ok(Self {
            hidden_weights: params[..o.hidden_bias]
                .chunks(h)
                .map(<[f64]>::to_vec)
                .collect(),
            hidden_bias: params[o.hidden_bias..o.output_weights].to_vec(),
            output_weights: params[o.output_weights..o.output_bias]
                .chunks(q)
                .map(<[f64]>::to_vec)
                .collect(),
            output_bias: params[o.output_bias..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.hidden_weights
            .iter()
            .flatten()
            .chain(&self.hidden_bias)
            .chain(self.output_weights.iter().flatten())
            .chain(&self.output_bias)
            .copied()
            .collect()
    }
}

/// Logistic function, evaluated without overflow for any finite input.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Draws `D` parameters i.i.d. uniform on `[-0.5, 0.5]`.
pub fn init_params<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Vec<f64> {
    (0..config.dim())
        .map(|_| rng.random_range(-0.5..=0.5))
        .collect()
}

/// Hidden activations into `hidden`, outputs into `out`.
#[inline]
fn propagate(config: &NetworkConfig, w: &[f64], x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
    let (h, q) = (config.hidden, config.outputs);
    let o = config.offsets();
    hidden.copy_from_slice(&w[o.hidden_bias..o.output_weights]);
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * h..(i + 1) * h];
        for (a, &b) in hidden.iter_mut().zip(row) {
            *a += b * xi;
        }
    }
    for a in hidden.iter_mut() {
        *a = logistic(*a);
    }
    out.copy_from_slice(&w[o.output_bias..]);
    for (j, &hj) in hidden.iter().enumerate() {
        let row = &w[o.output_weights + j * q..o.output_weights + (j + 1) * q];
        for (y, &a) in out.iter_mut().zip(row) {
            *y += a * hj;
        }
    }
}

pub fn forward(config: &NetworkConfig, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    config.check_params(params)?;
    if input.len() != config.inputs {
        return Err(Error::Dimension {
            what: "network input",
            expected: config.inputs,
            got: input.len(),
        });
    }
    let mut hidden = vec![0.0; config.hidden];
    let mut out = vec![0.0; config.outputs];
    propagate(config, params, input, &mut hidden, &mut out);
    Ok(out)
}

/// Hidden-layer activations for one input (diagnostics and tests).
pub fn hidden_activations(
    config: &NetworkConfig,
    params: &[f64],
    input: &[f64],
) -> Result<Vec<f64>> {
    forward(config, params, input)?;
    let mut hidden = vec![0.0; config.hidden];
    let mut out = vec![0.0; config.outputs];
    propagate(config, params, input, &mut hidden, &mut out);
    Ok(hidden)
}

/// `½ Σ (target − output)²` over all patterns and outputs.
pub fn sse_loss(config: &NetworkConfig, params: &[f64], patterns: &PatternSet) -> Result<f64> {
    config.check_params(params)?;
    config.check_patterns(patterns)?;
    Ok(sse_unchecked(config, params, patterns))
}

pub(crate) fn sse_unchecked(config: &NetworkConfig, params: &[f64], patterns: &PatternSet) -> f64 {
    let mut hidden = vec![0.0; config.hidden];
    let mut out = vec![0.0; config.outputs];
    let mut sum = 0.0;
    for (x, t) in patterns.iter() {
        propagate(config, params, x, &mut hidden, &mut out);
        for (y, t) in out.iter().zip(t) {
            let e = y - t;
            sum += e * e;
        }
    }
    0.5 * sum
}

/// Loss and its gradient by backpropagation.
pub fn loss_and_gradient(
    config: &NetworkConfig,
    params: &[f64],
    patterns: &PatternSet,
) -> Result<(f64, Vec<f64>)> {
    config.check_params(params)?;
    config.check_patterns(patterns)?;
    let mut grad = vec![0.0; config.dim()];
    let loss = loss_grad_unchecked(config, params, patterns, &mut grad);
    Ok((loss, grad))
}

pub fn gradient(config: &NetworkConfig, params: &[f64], patterns: &PatternSet) -> Result<Vec<f64>> {
    loss_and_gradient(config, params, patterns).map(|(_, g)| g)
}

pub(crate) fn loss_grad_unchecked(
    config: &NetworkConfig,
    w: &[f64],
    patterns: &PatternSet,
    grad: &mut [f64],
) -> f64 {
    let (h, q) = (config.hidden, config.outputs);
    let o = config.offsets();
    grad.fill(0.0);
    let mut hidden = vec![0.0; h];
    let mut out = vec![0.0; q];
    let mut err = vec![0.0; q];
    let mut delta = vec![0.0; h];
    let mut sum = 0.0;
    for (x, t) in patterns.iter() {
        propagate(config, w, x, &mut hidden, &mut out);
        for k in 0..q {
            err[k] = out[k] - t[k];
            sum += err[k] * err[k];
            grad[o.output_bias + k] += err[k];
        }
        for j in 0..h {
            let row = o.output_weights + j * q;
            let mut back = 0.0;
            for k in 0..q {
                grad[row + k] += err[k] * hidden[j];
                back += err[k] * w[row + k];
            }
            delta[j] = back * hidden[j] * (1.0 - hidden[j]);
            grad[o.hidden_bias + j] += delta[j];
        }
        for (i, &xi) in x.iter().enumerate() {
            for (g, d) in grad[i * h..(i + 1) * h].iter_mut().zip(&delta) {
                *g += d * xi;
            }
        }
    }
    0.5 * sum
}

/// Residuals `output − target`, ordered pattern-major then output node.
pub fn residuals(
    config: &NetworkConfig,
    params: &[f64],
    patterns: &PatternSet,
) -> Result<Vec<f64>> {
    config.check_params(params)?;
    config.check_patterns(patterns)?;
    let mut hidden = vec![0.0; config.hidden];
    let mut out = vec![0.0; config.outputs];
    let mut r = Vec::with_capacity(patterns.len() * config.outputs);
    for (x, t) in patterns.iter() {
        propagate(config, params, x, &mut hidden, &mut out);
        r.extend(out.iter().zip(t).map(|(y, t)| y - t));
    }
    Ok(r)
}

/// Residuals and their Jacobian (`rows = patterns × outputs`, `cols = D`).
/// Satisfies `∇E = Jᵀ r`.
pub fn residuals_and_jacobian(
    config: &NetworkConfig,
    params: &[f64],
    patterns: &PatternSet,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    config.check_params(params)?;
    config.check_patterns(patterns)?;
    let (h, q) = (config.hidden, config.outputs);
    let o = config.offsets();
    let rows = patterns.len() * q;
    let mut jac = DMatrix::zeros(rows, config.dim());
    let mut r = Vec::with_capacity(rows);
    let mut hidden = vec![0.0; h];
    let mut out = vec![0.0; q];
    for (n, (x, t)) in patterns.iter().enumerate() {
        propagate(config, params, x, &mut hidden, &mut out);
        for k in 0..q {
            let row = n * q + k;
            r.push(out[k] - t[k]);
            jac[(row, o.output_bias + k)] = 1.0;
            for j in 0..h {
                jac[(row, o.output_weights + j * q + k)] = hidden[j];
                let d = params[o.output_weights + j * q + k] * hidden[j] * (1.0 - hidden[j]);
                jac[(row, o.hidden_bias + j)] = d;
                for (i, &xi) in x.iter().enumerate() {
                    jac[(row, i * h + j)] = d * xi;
                }
            }
        }
    }
    Ok((r, jac))
}

pub fn jacobian(
    config: &NetworkConfig,
    params: &[f64],
    patterns: &PatternSet,
) -> Result<DMatrix<f64>> {
    residuals_and_jacobian(config, params, patterns).map(|(_, j)| j)
}

/// One-step-ahead forecasts of the last `horizon` entries of `observed`.
///
/// Each forecast uses the `p` observed values immediately before its target,
/// so `observed` must contain the actuals of the forecast span as well as at
/// least `p` values preceding it.
pub fn forecast_one_step(
    config: &NetworkConfig,
    params: &[f64],
    observed: &[f64],
    horizon: usize,
) -> Result<Vec<f64>> {
    config.check_params(params)?;
    if config.outputs != 1 {
        return Err(Error::InvalidNetwork(format!(
            "one-step forecasting needs a single output, network is {config}"
        )));
    }
    let p = config.inputs;
    if observed.len() < horizon + p {
        return Err(Error::SeriesTooShort {
            len: observed.len(),
            needed: horizon + p,
        });
    }
    let start = observed.len() - horizon;
    let mut hidden = vec![0.0; config.hidden];
    let mut out = [0.0];
    Ok((start..observed.len())
        .map(|t| {
            propagate(config, params, &observed[t - p..t], &mut hidden, &mut out);
            out[0]
        })
        .collect())
}

/// Block forecasts from an `(s, h, s)` network: the first block comes from
/// the last `s` values of `history`, each later block from the previous
/// forecast block. Truncated to `horizon`.
pub fn forecast_seasonal(
    config: &NetworkConfig,
    params: &[f64],
    history: &[f64],
    horizon: usize,
) -> Result<Vec<f64>> {
    config.check_params(params)?;
    let s = config.inputs;
    if config.outputs != s {
        return Err(Error::InvalidNetwork(format!(
            "block forecasting needs as many outputs as inputs, network is {config}"
        )));
    }
    if history.len() < s {
        return Err(Error::SeriesTooShort {
            len: history.len(),
            needed: s,
        });
    }
    let mut hidden = vec![0.0; config.hidden];
    let mut block = history[history.len() - s..].to_vec();
    let mut next = vec![0.0; s];
    let mut forecasts = Vec::with_capacity(horizon + s);
    while forecasts.len() < horizon {
        propagate(config, params, &block, &mut hidden, &mut next);
        forecasts.extend_from_slice(&next);
        std::mem::swap(&mut block, &mut next);
    }
    forecasts.truncate(horizon);
    Ok(forecasts)
}

/// Forecasts `horizon` points with the protocol matching the network shape:
/// one-step-ahead for a single output, block-iterative for `(s, h, s)`.
///
/// `history` holds everything before the forecast span and `actuals` the
/// observed values inside it (used only by the one-step protocol).
pub fn forecast(
    config: &NetworkConfig,
    params: &[f64],
    history: &[f64],
    actuals: &[f64],
) -> Result<Vec<f64>> {
    if config.outputs == 1 {
        let observed = [history, actuals].concat();
        forecast_one_step(config, params, &observed, actuals.len())
    } else {
        forecast_seasonal(config, params, history, actuals.len())
    }
}

/// Plain-text checkpoint: a `p h q` header line then one value per line with
/// 17 significant digits.
pub fn write_checkpoint(config: &NetworkConfig, params: &[f64]) -> Result<String> {
    config.check_params(params)?;
    let mut s = format!("{} {} {}\n", config.inputs, config.hidden, config.outputs);
    for v in params {
        let _ = writeln!(s, "{v:.16e}");
    }
    Ok(s)
}

pub fn read_checkpoint(text: &str) -> Result<(NetworkConfig, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Checkpoint("missing header".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Checkpoint(format!("bad header {header:?}: {e}")))?;
    let [p, h, q] = dims[..] else {
        return Err(Error::Checkpoint(format!(
            "header {header:?} must hold three counts"
        )));
    };
    let config = NetworkConfig::new(p, h, q)?;
    let params: Vec<f64> = lines
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| Error::Checkpoint(format!("bad value {l:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    config.check_params(&params)?;
    Ok((config, params))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    config: &NetworkConfig,
    params: &[f64],
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_checkpoint(config, params)?).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(NetworkConfig, Vec<f64>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_checkpoint(&text)
}
