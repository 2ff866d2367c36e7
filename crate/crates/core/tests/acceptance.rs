//! Acceptance suite. Prints one `PASS` / `FAIL` line per criterion and a
//! summary count. Failures are reported, not raised, so the rest of a
//! workspace test run still executes; set `TSENSEMBLE_ACCEPTANCE_STRICT=1` to
//! exit non-zero when any criterion fails.
//!
//! The four-dataset reproduction trains 7 trainers × 50 restarts × 2 phases
//! per run, three master seeds per dataset; set `TSENSEMBLE_ACCEPTANCE_QUICK=1`
//! to skip it (reported as `SKIP`).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use tsensemble::baselines;
use tsensemble::ensemble;
use tsensemble::experiment::{self, ExperimentConfig, RunReport};
use tsensemble::mlp::{self, NetworkConfig};
use tsensemble::series::{self, PatternSet, TransformSpec};
use tsensemble::trainers::{
    self, Algorithm, FnObjective, LeastSquares, LmParams, NetworkObjective, Scaled, TrainerKind,
    TrainerSpec,
};

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn report(&mut self, name: &str, verdict: Verdict, detail: String) {
        let tag = match verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                self.failures += 1;
                "FAIL"
            }
            Verdict::Skip => "SKIP",
        };
        println!("ACCEPTANCE {tag} {name}: {detail}");
        std::io::stdout().flush().unwrap();
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        self.report(name, if ok { Verdict::Pass } else { Verdict::Fail }, detail);
    }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Random `(p ≤ 5, h ≤ 4, q ≤ 3)` network, parameters from the training
/// initialisation range, ten patterns with inputs and targets in `[0, 1]`.
fn random_network(seed: u64) -> (NetworkConfig, Vec<f64>, PatternSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = NetworkConfig::new(
        rng.random_range(1..=5),
        rng.random_range(1..=4),
        rng.random_range(1..=3),
    )
    .unwrap();
    let params = mlp::init_params(&config, &mut rng);
    let n = 10;
    let inputs = (0..n * config.inputs)
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    let targets = (0..n * config.outputs)
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    (
        config,
        params,
        PatternSet::new(config.inputs, config.outputs, inputs, targets).unwrap(),
    )
}

fn gradient_checks(suite: &mut Suite) {
    let mut worst_fd: f64 = 0.0;
    let mut worst_jtr: f64 = 0.0;
    let step = 1e-6;
    for seed in 0..100 {
        let (c, w, pats) = random_network(seed);
        let (_, g) = mlp::loss_and_gradient(&c, &w, &pats).unwrap();
        for i in 0..w.len() {
            let mut x = w.clone();
            x[i] = w[i] + step;
            let up = mlp::sse_loss(&c, &x, &pats).unwrap();
            x[i] = w[i] - step;
            let down = mlp::sse_loss(&c, &x, &pats).unwrap();
            let fd = (up - down) / (2.0 * step);
            let diff = (g[i] - fd).abs();
            if diff > 1e-9 {
                worst_fd = worst_fd.max(diff / g[i].abs().max(fd.abs()));
            }
        }
        let (r, j) = mlp::residuals_and_jacobian(&c, &w, &pats).unwrap();
        let jtr = j.transpose() * DVector::from_vec(r);
        let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let diff = jtr
            .iter()
            .zip(&g)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst_jtr = worst_jtr.max(diff / scale);
    }
    suite.check(
        "gradient vs central differences (100 networks)",
        worst_fd < 1e-6,
        format!("max relative error {worst_fd:.3e} (bound 1e-6)"),
    );
    suite.check(
        "J^T r equals gradient (100 networks)",
        worst_jtr <= 1e-10,
        format!("max error {worst_jtr:.3e} (bound 1e-10)"),
    );
}

fn no_stagnation(kind: TrainerKind, epochs: usize) -> TrainerSpec {
    TrainerSpec::new(kind)
        .with_epochs(epochs)
        .with_stagnation_window(0)
}

fn optimizer_oracles(suite: &mut Suite) {
    // ½ (x − c)ᵀ A (x − c), A = MᵀM + I
    let quadratic = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let a = m.transpose() * &m + DMatrix::identity(5, 5);
        let c = DVector::from_fn(5, |_, _| rng.random_range(-2.0..2.0));
        let cc = c.clone();
        let obj = FnObjective::new(5, move |x: &[f64], g: &mut [f64]| {
            let d = DVector::from_column_slice(x) - &cc;
            let ad = &a * &d;
            g.copy_from_slice(ad.as_slice());
            0.5 * d.dot(&ad)
        });
        (obj, c)
    };
    for kind in [TrainerKind::Bfgs, TrainerKind::Scg] {
        let mut worst: f64 = 0.0;
        for seed in 0..10 {
            let (obj, c) = quadratic(seed);
            let m = trainers::surrogate_minimize(&no_stagnation(kind, 200), &obj, seed).unwrap();
            worst = worst.max((DVector::from_vec(m.params) - &c).amax());
        }
        suite.check(
            &format!("{} solves 5-D convex quadratics", kind.name()),
            worst <= 1e-8,
            format!("max |x - x*| over 10 quadratics {worst:.3e} (bound 1e-8)"),
        );
    }

    let mut worst: f64 = 0.0;
    let mut steps = Vec::new();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let j = DMatrix::from_fn(20, 5, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(20, |_, _| rng.random_range(-1.0..1.0));
        let exact = j.clone().svd(true, true).solve(&b, 1e-14).unwrap();
        let obj = LeastSquares::new(5, move |x: &[f64]| {
            let r = &j * DVector::from_column_slice(x) - &b;
            (r.as_slice().to_vec(), j.clone())
        });
        let mut spec = no_stagnation(TrainerKind::Lm, 1);
        spec.algorithm = Algorithm::Lm(LmParams {
            mu: 1e-12,
            ..LmParams::default()
        });
        let m = trainers::surrogate_minimize(&spec, &obj, seed).unwrap();
        steps.push(m.trace.epochs());
        worst = worst.max((DVector::from_vec(m.params) - &exact).amax());
    }
    suite.check(
        "lm solves linear least squares in one accepted step",
        worst <= 1e-8 && steps.iter().all(|&s| s == 1),
        format!("max |x - x*| after one step {worst:.3e} (bound 1e-8), mu0 = 1e-12"),
    );

    let sphere = FnObjective::new(5, |x: &[f64], g: &mut [f64]| {
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi = 2.0 * xi;
        }
        x.iter().map(|v| v * v).sum()
    });
    let fitness: Vec<f64> = (0..10)
        .map(|seed| {
            trainers::surrogate_minimize(
                &no_stagnation(TrainerKind::PsoTrelea2, 500),
                &sphere,
                seed,
            )
            .unwrap()
            .loss
        })
        .collect();
    let hits = fitness.iter().filter(|&&f| f < 1e-3).count();
    let worst = fitness.iter().copied().fold(0.0, f64::max);
    suite.check(
        "pso_trelea2 reaches sphere fitness < 1e-3 in 500 generations",
        hits >= 9,
        format!("{hits}/10 seeds (need 9), worst fitness {worst:.3e}"),
    );
}

fn rprop_invariance(suite: &mut Suite) {
    let raw = series::load_csv(root().join("data/lynx.csv")).unwrap();
    let logged = series::apply_transform(&raw, &TransformSpec::Log10).unwrap();
    let config = NetworkConfig::new(7, 5, 1).unwrap();
    let patterns = series::window(&logged.values()[..80], 7, 1).unwrap();
    let obj = NetworkObjective::new(config, &patterns).unwrap();
    let spec = no_stagnation(TrainerKind::Rprop, 500);
    let seed = 21;
    let base = trainers::surrogate_minimize(&spec, &obj, seed).unwrap();
    let scaled = Scaled {
        inner: obj,
        factor: 1000.0,
    };
    let m = trainers::surrogate_minimize(&spec, &scaled, seed).unwrap();
    let same_params = m.params == base.params;
    let same_losses = m.trace.losses.len() == base.trace.losses.len()
        && m.trace
            .losses
            .iter()
            .zip(&base.trace.losses)
            .all(|(a, b)| *a == 1000.0 * b);
    suite.check(
        "rprop trajectory unchanged by loss x 1000",
        same_params && same_losses,
        format!(
            "{} epochs, parameters bitwise equal: {same_params}, every loss exactly x1000: {same_losses}",
            base.trace.epochs()
        ),
    );
}

fn ensemble_algebra(suite: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut envelope_violations = 0;
    for _ in 0..1000 {
        let k = rng.random_range(1..=9);
        let len = rng.random_range(1..=20);
        let weights: Vec<f64> = (0..k)
            .map(|_| rng.random_range(1e-3..10.0f64).exp())
            .collect();
        let forecasts: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..len).map(|_| rng.random_range(-1e3..1e3)).collect())
            .collect();
        let combined = ensemble::combine(&weights, &forecasts).unwrap();
        let total: f64 = weights.iter().sum();
        for t in 0..len {
            let mut brute = 0.0;
            for i in 0..k {
                brute += weights[i] / total * forecasts[i][t];
            }
            let scale = forecasts.iter().fold(1.0f64, |m, f| m.max(f[t].abs()));
            worst = worst.max((combined[t] - brute).abs() / scale);
            let lo = forecasts.iter().map(|f| f[t]).fold(f64::INFINITY, f64::min);
            let hi = forecasts
                .iter()
                .map(|f| f[t])
                .fold(f64::NEG_INFINITY, f64::max);
            if !(lo <= combined[t] && combined[t] <= hi) {
                envelope_violations += 1;
            }
        }
    }
    suite.check(
        "combine equals brute-force weighted mean",
        worst <= 1e-12,
        format!("max relative difference {worst:.3e} over 1000 cases (bound 1e-12)"),
    );
    suite.check(
        "combined forecast inside the member envelope",
        envelope_violations == 0,
        format!("{envelope_violations} violations over 1000 cases"),
    );
}

fn baseline_recovery(suite: &mut Suite) {
    let noise = Normal::new(0.0, 0.1).unwrap();
    let estimates: Vec<f64> = (0..10)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut y = vec![0.0];
            for _ in 0..599 {
                let prev = *y.last().unwrap();
                y.push(0.5 * prev + noise.sample(&mut rng));
            }
            // discard a burn-in of 100
            baselines::fit_ar(&y[100..], 1).unwrap().coefficients[0]
        })
        .collect();
    let hits = estimates
        .iter()
        .filter(|p| (*p - 0.5).abs() <= 0.05)
        .count();
    suite.check(
        "AR(1) phi = 0.5 recovered within 0.05 (length 500)",
        hits >= 9,
        format!(
            "{hits}/10 seeds (need 9); estimates {:?}",
            estimates
                .iter()
                .map(|p| format!("{p:.3}"))
                .collect::<Vec<_>>()
        ),
    );

    let unit = Normal::new(0.0, 1.0).unwrap();
    let (theta, big_theta, s, n) = (-0.4, -0.6, 12, 600);
    let fits: Vec<(f64, f64)> = (0..10)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let burn = 5 * s;
            let e: Vec<f64> = (0..n + burn).map(|_| unit.sample(&mut rng)).collect();
            let mut y = vec![0.0; s + 1];
            for t in s + 1..n + burn {
                let w = e[t]
                    + theta * e[t - 1]
                    + big_theta * e[t - s]
                    + theta * big_theta * e[t - s - 1];
                let k = y.len();
                y.push(w + y[k - 1] + y[k - s] - y[k - s - 1]);
            }
            let m = baselines::fit_sarima_ma(&y[y.len() - n..], s).unwrap();
            (m.theta, m.seasonal_theta)
        })
        .collect();
    let hits = fits
        .iter()
        .filter(|(a, b)| (a - theta).abs() <= 0.1 && (b - big_theta).abs() <= 0.1)
        .count();
    suite.check(
        "SARIMA theta = -0.4, Theta = -0.6 recovered within 0.1 (length 600)",
        hits >= 9,
        format!(
            "{hits}/10 seeds (need 9); estimates {:?}",
            fits.iter()
                .map(|(a, b)| format!("({a:.3}, {b:.3})"))
                .collect::<Vec<_>>()
        ),
    );
}

fn lynx_ar_band(suite: &mut Suite) {
    let raw = series::load_csv(root().join("data/lynx.csv")).unwrap();
    let logged = TransformSpec::Log10.apply_values(raw.values()).unwrap();
    let (in_sample, test) = logged.split_at(100);
    let m = baselines::fit_ar(in_sample, 12).unwrap();
    let f = baselines::forecast_ar(&m, in_sample, test).unwrap();
    let mse = series::metrics(test, &f).unwrap().mse;
    suite.check(
        "lynx AR(12) one-step test MSE within [0.006, 0.026]",
        (0.006..=0.026).contains(&mse),
        format!("MSE {mse:.6} (log10 scale, OLS on the first 100 points)"),
    );
}

/// One bundled config with the reproduction protocol.
struct Dataset {
    config: &'static str,
    metric: &'static str,
    bar: f64,
    band: f64,
}

const DATASETS: [Dataset; 4] = [
    Dataset {
        config: "lynx",
        metric: "MSE",
        bar: 0.01285,
        band: 0.013,
    },
    Dataset {
        config: "sunspot",
        metric: "MSE",
        bar: 483.5,
        band: 450.0,
    },
    Dataset {
        config: "airline",
        metric: "MAPE",
        bar: 3.71,
        band: 3.5,
    },
    Dataset {
        config: "redwine",
        metric: "MAPE",
        bar: 9.65,
        band: 9.0,
    },
];

const MASTER_SEEDS: [u64; 3] = [1, 2, 3];

fn run_config(name: &str, seed: u64, out: &Path, budget: Option<(usize, usize)>) -> RunReport {
    let mut c =
        ExperimentConfig::load(root().join("configs").join(format!("{name}.toml"))).unwrap();
    c.seed = seed;
    c.output_dir = out.to_path_buf();
    if let Some((restarts, epochs)) = budget {
        c.restarts = restarts;
        c.set_epochs(epochs);
    }
    let report = experiment::run_experiment(&c).unwrap();
    report.write(out).unwrap();
    report
}

fn headline(report: &RunReport, metric: &str) -> f64 {
    let e = &report.summary.ensemble;
    if metric == "MSE" {
        e.mse
    } else {
        e.mape
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    [
        "errors.csv",
        "forecasts.csv",
        "trainer_mape.csv",
        "baseline.csv",
    ]
    .iter()
    .filter_map(|f| fs::read(dir.join(f)).ok().map(|b| (f.to_string(), b)))
    .collect()
}

fn reproduction(suite: &mut Suite, scratch: &Path) {
    for d in &DATASETS {
        let start = Instant::now();
        let reports: Vec<RunReport> = MASTER_SEEDS
            .iter()
            .map(|&seed| {
                run_config(
                    d.config,
                    seed,
                    &scratch.join(format!("{}-seed{seed}", d.config)),
                    None,
                )
            })
            .collect();
        let values: Vec<f64> = reports.iter().map(|r| headline(r, d.metric)).collect();
        let med = median(values.clone());
        let baseline: Vec<String> = reports
            .iter()
            .map(|r| {
                r.summary
                    .baseline
                    .as_ref()
                    .map(|b| {
                        format!(
                            "{:.5}",
                            if d.metric == "MSE" {
                                b.errors.mse
                            } else {
                                b.errors.mape
                            }
                        )
                    })
                    .unwrap_or_else(|| "-".into())
            })
            .collect();
        suite.check(
            &format!("{} combined test {} < {}", d.config, d.metric, d.bar),
            med < d.bar,
            format!(
                "median {med:.5} over seeds {:?}: {:?}; target band <= {} {}; own baseline {:?}; {:.0}s",
                MASTER_SEEDS,
                values.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>(),
                d.band,
                if med <= d.band { "met" } else { "not met" },
                baseline,
                start.elapsed().as_secs_f64()
            ),
        );

        // ensemble vs the individual trainers, at the median seed
        let at = values.iter().position(|v| *v == med).unwrap();
        let r = &reports[at];
        let trainer_mapes = median(r.summary.trainers.iter().map(|t| t.errors.mape).collect());
        let combined = r.summary.ensemble.mape;
        suite.check(
            &format!("{} combined MAPE <= median trainer MAPE", d.config),
            combined <= trainer_mapes,
            format!(
                "seed {}: combined {combined:.4}, trainer median {trainer_mapes:.4}, trainers {:?}",
                MASTER_SEEDS[at],
                r.summary
                    .trainers
                    .iter()
                    .map(|t| format!("{} {:.3}", t.label, t.errors.mape))
                    .collect::<Vec<_>>()
            ),
        );

        if d.config == "lynx" {
            let again = scratch.join("lynx-seed1-again");
            run_config("lynx", 1, &again, None);
            let same = csv_bytes(&again) == csv_bytes(&scratch.join("lynx-seed1"));
            suite.check(
                "lynx full run repeated with the same seed gives identical CSVs",
                same,
                format!("byte-identical: {same}"),
            );
        }
    }
}

fn determinism(suite: &mut Suite, scratch: &Path) {
    let mut all = true;
    let mut details = Vec::new();
    for d in &DATASETS {
        let a = scratch.join(format!("det-{}-a", d.config));
        let b = scratch.join(format!("det-{}-b", d.config));
        run_config(d.config, 7, &a, Some((2, 50)));
        run_config(d.config, 7, &b, Some((2, 50)));
        let (ca, cb) = (csv_bytes(&a), csv_bytes(&b));
        let same = ca == cb && ca.len() == 4;
        all &= same;
        details.push(format!(
            "{} {}",
            d.config,
            if same { "identical" } else { "DIFFERENT" }
        ));
    }
    suite.check(
        "bundled configs reproduce byte-identical CSVs (2 restarts, 50 epochs)",
        all,
        details.join(", "),
    );
}

fn main() {
    let start = Instant::now();
    let mut suite = Suite { failures: 0 };
    let scratch = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&scratch).unwrap();

    gradient_checks(&mut suite);
    optimizer_oracles(&mut suite);
    rprop_invariance(&mut suite);
    ensemble_algebra(&mut suite);
    baseline_recovery(&mut suite);
    lynx_ar_band(&mut suite);
    determinism(&mut suite, &scratch);
    if std::env::var_os("TSENSEMBLE_ACCEPTANCE_QUICK").is_some() {
        for d in &DATASETS {
            suite.report(
                &format!("{} reproduction", d.config),
                Verdict::Skip,
                "TSENSEMBLE_ACCEPTANCE_QUICK is set".into(),
            );
        }
    } else {
        reproduction(&mut suite, &scratch);
    }

    println!(
        "acceptance: {} failed; {:.0}s; run outputs in {}",
        suite.failures,
        start.elapsed().as_secs_f64(),
        scratch.display()
    );
    if suite.failures > 0 && std::env::var_os("TSENSEMBLE_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
