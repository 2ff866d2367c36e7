//! Error-weighted combination of networks trained with different algorithms.
//!
//! Each member is trained from several random starts on the training
//! segment; the start with the lowest validation error sum is kept and its
//! validation errors set the member's weight `w = exp(1 / (MAE + MSE + MAPE))`.
//! Every member is then refitted on training plus validation data, forecasts
//! the test segment, and the forecasts are averaged with those weights.

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mlp::{self, NetworkConfig};
use crate::seeds::{self, Phase};
use crate::series::{self, ErrorTriple, SplitSpec, TimeSeries};
use crate::trainers::{self, Termination, TrainedModel, TrainerSpec};

/// Upper bound on `g`, so a perfect validation fit cannot overflow `exp`.
pub const G_MAX: f64 = 50.0;

/// `g = 1 / (MAE + MSE + MAPE)`, clamped to at most [`G_MAX`], and
/// `w = exp(g)`.
pub fn compute_weight(validation: &ErrorTriple) -> (f64, f64) {
    let sum = validation.sum();
    let g = if sum > 0.0 {
        (1.0 / sum).min(G_MAX)
    } else {
        G_MAX
    };
    (g, g.exp())
}

/// Weighted mean `Σ wᵢ Dᵢ / Σ wᵢ`, elementwise.
pub fn combine(weights: &[f64], forecasts: &[Vec<f64>]) -> Result<Vec<f64>> {
    if forecasts.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if weights.len() != forecasts.len() {
        return Err(Error::LengthMismatch {
            expected: forecasts.len(),
            got: weights.len(),
        });
    }
    if let Some((index, &value)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(**w > 0.0 && w.is_finite()))
    {
        return Err(Error::NonPositiveWeight { index, value });
    }
    let len = forecasts[0].len();
    if let Some(f) = forecasts.iter().find(|f| f.len() != len) {
        return Err(Error::LengthMismatch {
            expected: len,
            got: f.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    Ok((0..len)
        .map(|t| {
            let mut num = 0.0;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for (w, f) in weights.iter().zip(forecasts) {
                num += w * f[t];
                lo = lo.min(f[t]);
                hi = hi.max(f[t]);
            }
            // rounding can push the quotient one ulp outside the envelope
            (num / total).clamp(lo, hi)
        })
        .collect())
}

/// One ensemble member: a trainer and the label its seed stream is keyed by.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Member {
    pub label: String,
    pub spec: TrainerSpec,
    /// Overrides the stream seed derived from the master seed and label.
    pub seed: Option<u64>,
}

impl Member {
    pub fn new(spec: TrainerSpec) -> Self {
        Self {
            label: spec.kind().name().to_string(),
            spec,
            seed: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn stream_seed(&self, master: u64) -> u64 {
        self.seed
            .unwrap_or_else(|| seeds::stream_seed(master, &self.label))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EnsembleOptions {
    /// Random starts per member in each phase.
    pub restarts: usize,
    pub seed: u64,
    /// Refit once from the selected parameters instead of from fresh starts.
    pub warm_start: bool,
}

impl EnsembleOptions {
    pub fn new(restarts: usize, seed: u64) -> Self {
        Self {
            restarts,
            seed,
            warm_start: false,
        }
    }
}

/// Validation errors of a member's selected network and the resulting weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainerEvaluation {
    /// On the working scale; these set the weight.
    pub validation: ErrorTriple,
    pub validation_original: ErrorTriple,
    pub g: f64,
    pub w: f64,
}

/// One training run inside a phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartOutcome {
    /// Position of the run in its phase, counting failed runs.
    pub restart: usize,
    pub seed: u64,
    pub final_loss: f64,
    pub epochs: usize,
    pub termination: Termination,
    /// Validation error sum (selection phase) or training loss (refit phase).
    pub score: f64,
    /// Test-segment errors of this run (refit phase only).
    pub test_errors: Option<ErrorTriple>,
    pub test_errors_original: Option<ErrorTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberResult {
    pub label: String,
    pub spec: TrainerSpec,
    pub stream_seed: u64,
    pub evaluation: TrainerEvaluation,
    pub selection: Vec<RestartOutcome>,
    pub selected: usize,
    pub refit: Vec<RestartOutcome>,
    pub refit_selected: usize,
    /// Restarts that failed and were skipped, over both phases.
    pub failed_restarts: usize,
    pub params: Vec<f64>,
    /// Test forecasts on the working scale.
    pub forecast: Vec<f64>,
    pub forecast_original: Vec<f64>,
    pub test_errors: ErrorTriple,
    pub test_errors_original: ErrorTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedMember {
    pub label: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub config: NetworkConfig,
    pub split: SplitSpec,
    pub options: EnsembleOptions,
    pub members: Vec<MemberResult>,
    pub dropped: Vec<DroppedMember>,
    pub test_actual: Vec<f64>,
    pub test_actual_original: Vec<f64>,
    pub combined: Vec<f64>,
    pub combined_original: Vec<f64>,
    pub combined_errors: ErrorTriple,
    pub combined_errors_original: ErrorTriple,
}

impl EnsembleResult {
    pub fn weights(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.evaluation.w).collect()
    }

    pub fn forecasts(&self) -> Vec<Vec<f64>> {
        self.members.iter().map(|m| m.forecast.clone()).collect()
    }
}

/// Selected network of the first phase.
struct Selected {
    outcomes: Vec<RestartOutcome>,
    index: usize,
    params: Vec<f64>,
    validation: ErrorTriple,
    validation_original: ErrorTriple,
    failed: usize,
}

struct Refitted {
    outcomes: Vec<RestartOutcome>,
    index: usize,
    params: Vec<f64>,
    forecast: Vec<f64>,
    failed: usize,
}

/// Runs the full procedure on a series already on its working scale.
pub fn run_ensemble(
    series: &TimeSeries,
    split: SplitSpec,
    config: NetworkConfig,
    members: &[Member],
    options: &EnsembleOptions,
) -> Result<EnsembleResult> {
    if members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if options.restarts == 0 {
        return Err(Error::InvalidHyperparameter {
            name: "restarts",
            reason: "must be at least 1".into(),
        });
    }
    if members.len().is_multiple_of(2) {
        warn!("ensemble has an even number of members ({})", members.len());
    }
    for m in members {
        m.spec.validate()?;
    }
    let segs = series::split(series, split)?;
    let (p, q) = (config.inputs, config.outputs);
    let train = segs.train.values();
    let validation = segs.validation.values();
    let test = segs.test.values();
    let in_sample = [train, validation].concat();
    let train_patterns = series::window(train, p, q)?;
    let full_patterns = series::window(&in_sample, p, q)?;

    let streams: Vec<u64> = members
        .iter()
        .map(|m| m.stream_seed(options.seed))
        .collect();

    // Selection phase: every (member, restart) pair independently.
    let jobs: Vec<(usize, usize)> = (0..members.len())
        .flat_map(|m| (0..options.restarts).map(move |r| (m, r)))
        .collect();
    let validation_original = series.to_original_scale(validation);
    let runs: Vec<Result<(TrainedModel, [ErrorTriple; 2])>> = jobs
        .par_iter()
        .map(|&(m, r)| {
            let seed = seeds::restart_seed(streams[m], Phase::Selection, r);
            let model = trainers::train(&members[m].spec, config, &train_patterns, seed)?;
            let fc = mlp::forecast(&config, &model.params, train, validation)?;
            let errors = series::metrics(validation, &fc)?;
            if !errors.sum().is_finite() {
                return Err(Error::Optimizer("validation error is not finite".into()));
            }
            let errors_original =
                series::metrics(&validation_original, &series.to_original_scale(&fc))?;
            Ok((model, [errors, errors_original]))
        })
        .collect();
    let mut runs = runs.into_iter();
    let mut selected: Vec<Result<Selected>> = Vec::with_capacity(members.len());
    for (m, member) in members.iter().enumerate() {
        let mut outcomes = Vec::new();
        let mut best: Option<(usize, Vec<f64>, [ErrorTriple; 2])> = None;
        let mut failed = 0;
        let mut last_error = None;
        for r in 0..options.restarts {
            match runs.next().expect("one result per job") {
                Ok((model, errors)) => {
                    let score = errors[0].sum();
                    if best.as_ref().is_none_or(|(_, _, e)| score < e[0].sum()) {
                        best = Some((outcomes.len(), model.params.clone(), errors));
                    }
                    outcomes.push(outcome(
                        r,
                        seeds::restart_seed(streams[m], Phase::Selection, r),
                        &model,
                        score,
                        None,
                        None,
                    ));
                }
                Err(e) => {
                    warn!("{}: selection restart {r} failed: {e}", member.label);
                    failed += 1;
                    last_error = Some(e);
                }
            }
        }
        selected.push(match best {
            Some((index, params, [validation, validation_original])) => Ok(Selected {
                outcomes,
                index,
                params,
                validation,
                validation_original,
                failed,
            }),
            None => Err(last_error.expect("restarts >= 1")),
        });
    }

    // Refit phase on training plus validation data.
    let refit_runs = if options.warm_start {
        1
    } else {
        options.restarts
    };
    let jobs: Vec<(usize, usize)> = (0..members.len())
        .filter(|&m| selected[m].is_ok())
        .flat_map(|m| (0..refit_runs).map(move |r| (m, r)))
        .collect();
    let test_original = series.to_original_scale(test);
    let runs: Vec<Result<(TrainedModel, Vec<f64>, [ErrorTriple; 2])>> = jobs
        .par_iter()
        .map(|&(m, r)| {
            let seed = seeds::restart_seed(streams[m], Phase::Refit, r);
            let spec = &members[m].spec;
            let model = match (&selected[m], options.warm_start) {
                (Ok(sel), true) => {
                    trainers::train_from(spec, config, &full_patterns, sel.params.clone(), seed)?
                }
                _ => trainers::train(spec, config, &full_patterns, seed)?,
            };
            let fc = mlp::forecast(&config, &model.params, &in_sample, test)?;
            let errors = series::metrics(test, &fc)?;
            let errors_original = series::metrics(&test_original, &series.to_original_scale(&fc))?;
            Ok((model, fc, [errors, errors_original]))
        })
        .collect();
    let mut runs = runs.into_iter();

    let mut results = Vec::new();
    let mut dropped = Vec::new();
    for (m, member) in members.iter().enumerate() {
        let sel = match selected[m].as_ref() {
            Ok(sel) => sel,
            Err(e) => {
                warn!(
                    "dropping {}: every selection restart failed: {e}",
                    member.label
                );
                dropped.push(DroppedMember {
                    label: member.label.clone(),
                    error: e.to_string(),
                });
                continue;
            }
        };
        let mut outcomes = Vec::new();
        let mut best: Option<(usize, Vec<f64>, Vec<f64>, f64)> = None;
        let mut failed = 0;
        let mut last_error = None;
        for r in 0..refit_runs {
            match runs.next().expect("one result per job") {
                Ok((model, fc, errors)) => {
                    let score = model.final_loss;
                    if best.as_ref().is_none_or(|b| score < b.3) {
                        best = Some((outcomes.len(), model.params.clone(), fc, score));
                    }
                    outcomes.push(outcome(
                        r,
                        seeds::restart_seed(streams[m], Phase::Refit, r),
                        &model,
                        score,
                        Some(errors[0]),
                        Some(errors[1]),
                    ));
                }
                Err(e) => {
                    warn!("{}: refit restart {r} failed: {e}", member.label);
                    failed += 1;
                    last_error = Some(e);
                }
            }
        }
        let Some((index, params, forecast, _)) = best else {
            let e = last_error.expect("refit runs >= 1");
            warn!("dropping {}: every refit restart failed: {e}", member.label);
            dropped.push(DroppedMember {
                label: member.label.clone(),
                error: e.to_string(),
            });
            continue;
        };
        let refit = Refitted {
            outcomes,
            index,
            params,
            forecast,
            failed,
        };
        results.push(member_result(member, streams[m], sel, refit, series, test)?);
    }

    if results.is_empty() {
        let reasons: Vec<String> = dropped
            .iter()
            .map(|d| format!("{}: {}", d.label, d.error))
            .collect();
        return Err(Error::NoSurvivingTrainer(reasons.join("; ")));
    }

    let weights: Vec<f64> = results.iter().map(|m| m.evaluation.w).collect();
    let forecasts: Vec<Vec<f64>> = results.iter().map(|m| m.forecast.clone()).collect();
    let combined = combine(&weights, &forecasts)?;
    let test_actual_original = series.to_original_scale(test);
    let combined_original = series.to_original_scale(&combined);
    Ok(EnsembleResult {
        config,
        split,
        options: *options,
        combined_errors: series::metrics(test, &combined)?,
        combined_errors_original: series::metrics(&test_actual_original, &combined_original)?,
        members: results,
        dropped,
        test_actual: test.to_vec(),
        test_actual_original,
        combined,
        combined_original,
    })
}

fn outcome(
    restart: usize,
    seed: u64,
    model: &TrainedModel,
    score: f64,
    test_errors: Option<ErrorTriple>,
    test_errors_original: Option<ErrorTriple>,
) -> RestartOutcome {
    RestartOutcome {
        restart,
        seed,
        final_loss: model.final_loss,
        epochs: model.trace.epochs(),
        termination: model.trace.termination,
        score,
        test_errors,
        test_errors_original,
    }
}

fn member_result(
    member: &Member,
    stream_seed: u64,
    sel: &Selected,
    refit: Refitted,
    series: &TimeSeries,
    test: &[f64],
) -> Result<MemberResult> {
    let (g, w) = compute_weight(&sel.validation);
    let forecast_original = series.to_original_scale(&refit.forecast);
    let test_original = series.to_original_scale(test);
    Ok(MemberResult {
        label: member.label.clone(),
        spec: member.spec,
        stream_seed,
        evaluation: TrainerEvaluation {
            validation: sel.validation,
            validation_original: sel.validation_original,
            g,
            w,
        },
        selection: sel.outcomes.clone(),
        selected: sel.index,
        refit: refit.outcomes,
        refit_selected: refit.index,
        failed_restarts: sel.failed + refit.failed,
        params: refit.params,
        test_errors: series::metrics(test, &refit.forecast)?,
        test_errors_original: series::metrics(&test_original, &forecast_original)?,
        forecast: refit.forecast,
        forecast_original,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn triple(sum: f64) -> ErrorTriple {
        ErrorTriple {
            mae: sum / 4.0,
            mse: sum / 4.0,
            mape: sum / 2.0,
        }
    }

    #[test]
    fn weight_examples() {
        let (g, w) = compute_weight(&triple(1.0));
        assert_eq!(g, 1.0);
        assert!((w - std::f64::consts::E).abs() < 1e-15);
        let (g, w) = compute_weight(&triple(0.0));
        assert_eq!(g, G_MAX);
        assert_eq!(w, G_MAX.exp());
        let (_, w1) = compute_weight(&triple(1.0));
        let (_, w2) = compute_weight(&triple(2.0));
        assert!((w1 / w2 - 0.5f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn combine_examples() {
        assert_eq!(
            combine(&[2.5], &[vec![1.0, -3.0]]).unwrap(),
            vec![1.0, -3.0]
        );
        assert_eq!(
            combine(&[1.0, 1.0], &[vec![0.0, 0.0], vec![2.0, 4.0]]).unwrap(),
            vec![1.0, 2.0]
        );
        assert_eq!(
            combine(&[1.0, 3.0], &[vec![0.0], vec![4.0]]).unwrap(),
            vec![3.0]
        );
    }

    #[test]
    fn combine_errors() {
        assert!(matches!(combine(&[], &[]), Err(Error::EmptyEnsemble)));
        assert!(matches!(
            combine(&[1.0, 0.0], &[vec![1.0], vec![2.0]]),
            Err(Error::NonPositiveWeight { index: 1, .. })
        ));
        assert!(combine(&[1.0, 1.0], &[vec![1.0], vec![2.0, 3.0]]).is_err());
        assert!(combine(&[1.0], &[vec![1.0], vec![2.0]]).is_err());
    }

    proptest! {
        #[test]
        fn weights_decrease_with_error(a in 0.021f64..100.0, b in 0.021f64..100.0) {
            prop_assume!(a != b);
            let (_, wa) = compute_weight(&triple(a));
            let (_, wb) = compute_weight(&triple(b));
            prop_assert_eq!(a < b, wa > wb);
        }

        #[test]
        fn combination_is_convex(
            ws in prop::collection::vec(1e-3f64..1e3, 1..8),
            seed in prop::collection::vec(-1e3f64..1e3, 8 * 5),
        ) {
            let fs: Vec<Vec<f64>> = (0..ws.len()).map(|i| seed[i * 5..i * 5 + 5].to_vec()).collect();
            let d = combine(&ws, &fs).unwrap();
            for t in 0..5 {
                let lo = fs.iter().map(|f| f[t]).fold(f64::INFINITY, f64::min);
                let hi = fs.iter().map(|f| f[t]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= d[t] && d[t] <= hi);
            }
        }

        #[test]
        fn combination_ignores_order(
            ws in prop::collection::vec(1e-3f64..1e3, 2..6),
            seed in prop::collection::vec(-10f64..10.0, 6 * 3),
        ) {
            let fs: Vec<Vec<f64>> = (0..ws.len()).map(|i| seed[i * 3..i * 3 + 3].to_vec()).collect();
            let d = combine(&ws, &fs).unwrap();
            let rw: Vec<f64> = ws.iter().rev().copied().collect();
            let rf: Vec<Vec<f64>> = fs.iter().rev().cloned().collect();
            let r = combine(&rw, &rf).unwrap();
            for t in 0..3 {
                prop_assert!((d[t] - r[t]).abs() <= 1e-12 * (1.0 + d[t].abs()));
            }
        }
    }
}
