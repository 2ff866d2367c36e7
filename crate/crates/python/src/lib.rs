//! Python bindings. Results with many fields are returned as plain dicts
//! built from the same serialization the CLI writes to `report.json`.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyString};
use serde::Serialize;
use toml::{Table, Value};

use tsensemble::baselines;
use tsensemble::ensemble::{self, EnsembleOptions, Member};
use tsensemble::experiment::{self, CompareOptions, ExperimentConfig, Summary};
use tsensemble::mlp::{self, NetworkConfig};
use tsensemble::series::{self, SplitSpec, TimeSeries};
use tsensemble::trainers::{self, TrainerKind, TrainerSpec};

fn err(e: tsensemble::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

/// Keyword arguments as the key/value table a config file would hold.
fn kwargs_table(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Table> {
    let mut t = Table::new();
    let Some(kwargs) = kwargs else { return Ok(t) };
    for (k, v) in kwargs.iter() {
        let key: String = k.extract()?;
        let value = if v.is_instance_of::<PyBool>() {
            Value::Boolean(v.extract()?)
        } else if v.is_instance_of::<PyInt>() {
            Value::Integer(v.extract()?)
        } else if v.is_instance_of::<PyFloat>() {
            Value::Float(v.extract()?)
        } else if v.is_instance_of::<PyString>() {
            Value::String(v.extract()?)
        } else {
            return Err(PyValueError::new_err(format!(
                "{key}: unsupported value type"
            )));
        };
        t.insert(key, value);
    }
    Ok(t)
}

fn trainer_spec(
    kind: &str,
    epochs: usize,
    kwargs: Option<&Bound<'_, PyDict>>,
) -> PyResult<TrainerSpec> {
    let mut t = kwargs_table(kwargs)?;
    t.insert("kind".into(), Value::String(kind.into()));
    t.entry("epochs").or_insert(Value::Integer(epochs as i64));
    TrainerSpec::from_table(&t, "trainer").map_err(err)
}

/// MLP topology `(inputs, hidden, outputs)`.
#[pyclass(name = "NetworkConfig", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyNetworkConfig(NetworkConfig);

#[pymethods]
impl PyNetworkConfig {
    #[new]
    fn new(inputs: usize, hidden: usize, outputs: usize) -> PyResult<Self> {
        NetworkConfig::new(inputs, hidden, outputs)
            .map(Self)
            .map_err(err)
    }

    /// `(s, h, s)` seasonal network.
    #[staticmethod]
    fn seasonal(period: usize, hidden: usize) -> PyResult<Self> {
        NetworkConfig::seasonal(period, hidden)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn inputs(&self) -> usize {
        self.0.inputs
    }

    #[getter]
    fn hidden(&self) -> usize {
        self.0.hidden
    }

    #[getter]
    fn outputs(&self) -> usize {
        self.0.outputs
    }

    /// Length of the flat parameter vector.
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn init_params(&self, seed: u64) -> Vec<f64> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        mlp::init_params(&self.0, &mut rng)
    }

    fn forward(&self, params: Vec<f64>, x: Vec<f64>) -> PyResult<Vec<f64>> {
        mlp::forward(&self.0, &params, &x).map_err(err)
    }

    /// Half sum of squared errors over the sliding-window patterns of `values`.
    fn loss(&self, params: Vec<f64>, values: Vec<f64>) -> PyResult<f64> {
        let patterns = series::window(&values, self.0.inputs, self.0.outputs).map_err(err)?;
        mlp::sse_loss(&self.0, &params, &patterns).map_err(err)
    }

    fn loss_and_gradient(&self, params: Vec<f64>, values: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
        let patterns = series::window(&values, self.0.inputs, self.0.outputs).map_err(err)?;
        mlp::loss_and_gradient(&self.0, &params, &patterns).map_err(err)
    }

    /// Forecasts `actuals`, feeding observed values back as inputs.
    fn forecast(
        &self,
        params: Vec<f64>,
        history: Vec<f64>,
        actuals: Vec<f64>,
    ) -> PyResult<Vec<f64>> {
        mlp::forecast(&self.0, &params, &history, &actuals).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "NetworkConfig({}, {}, {})",
            self.0.inputs, self.0.hidden, self.0.outputs
        )
    }
}

/// Loads a one-column (optionally dated) CSV.
#[pyfunction]
fn load_csv(path: PathBuf) -> PyResult<Vec<f64>> {
    series::load_csv(path)
        .map(|s| s.values().to_vec())
        .map_err(err)
}

/// Sliding-window patterns as `(inputs, targets)` lists of rows.
#[pyfunction]
fn window(values: Vec<f64>, p: usize, q: usize) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let set = series::window(&values, p, q).map_err(err)?;
    Ok(set.iter().map(|(x, t)| (x.to_vec(), t.to_vec())).unzip())
}

/// `{"mae", "mse", "mape"}` of a forecast.
#[pyfunction]
fn metrics<'py>(
    py: Python<'py>,
    actual: Vec<f64>,
    forecast: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &series::metrics(&actual, &forecast).map_err(err)?)
}

/// `(g, w)` for a member with the given validation errors.
#[pyfunction]
fn compute_weight(mae: f64, mse: f64, mape: f64) -> (f64, f64) {
    ensemble::compute_weight(&series::ErrorTriple { mae, mse, mape })
}

#[pyfunction]
fn combine(weights: Vec<f64>, forecasts: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    ensemble::combine(&weights, &forecasts).map_err(err)
}

/// Trains one network on the sliding-window patterns of `values`. Extra
/// keyword arguments are trainer settings, named as in a config file.
#[pyfunction]
#[pyo3(signature = (network, values, kind, seed, epochs = 2000, **kwargs))]
fn train<'py>(
    py: Python<'py>,
    network: PyNetworkConfig,
    values: Vec<f64>,
    kind: &str,
    seed: u64,
    epochs: usize,
    kwargs: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = trainer_spec(kind, epochs, kwargs)?;
    let patterns = series::window(&values, network.0.inputs, network.0.outputs).map_err(err)?;
    let model = py
        .detach(|| trainers::train(&spec, network.0, &patterns, seed))
        .map_err(err)?;
    to_py(py, &model)
}

/// Trainer names accepted by `train` and `run_ensemble`.
#[pyfunction]
fn trainer_kinds() -> Vec<&'static str> {
    TrainerKind::ALL.iter().map(|k| k.name()).collect()
}

/// Runs the full ensemble on `values` (already on the working scale).
#[pyfunction]
#[pyo3(signature = (values, split, network, trainers = None, restarts = 50, seed = 0, epochs = 2000))]
fn run_ensemble<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    split: (usize, usize, usize),
    network: PyNetworkConfig,
    trainers: Option<Vec<String>>,
    restarts: usize,
    seed: u64,
    epochs: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let names = trainers.unwrap_or_else(|| {
        TrainerKind::ENSEMBLE_SEVEN
            .iter()
            .map(|k| k.name().to_string())
            .collect()
    });
    let members = names
        .iter()
        .map(|n| trainer_spec(n, epochs, None).map(Member::new))
        .collect::<PyResult<Vec<_>>>()?;
    let series = TimeSeries::new("values", values).map_err(err)?;
    let options = EnsembleOptions::new(restarts, seed);
    let split = SplitSpec::new(split.0, split.1, split.2);
    let result = py
        .detach(|| ensemble::run_ensemble(&series, split, network.0, &members, &options))
        .map_err(err)?;
    to_py(py, &result)
}

/// AR(p) fitted by least squares.
#[pyclass(name = "ArModel", frozen)]
struct PyArModel(baselines::ArModel);

#[pymethods]
impl PyArModel {
    #[new]
    fn fit(values: Vec<f64>, order: usize) -> PyResult<Self> {
        baselines::fit_ar(&values, order).map(Self).map_err(err)
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.0.intercept
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.0.coefficients.clone()
    }

    #[getter]
    fn residual_variance(&self) -> f64 {
        self.0.residual_variance
    }

    /// One-step forecasts of each entry of `actuals`.
    fn forecast(&self, history: Vec<f64>, actuals: Vec<f64>) -> PyResult<Vec<f64>> {
        baselines::forecast_ar(&self.0, &history, &actuals).map_err(err)
    }
}

/// SARIMA(0,1,1)×(0,1,1) fitted by conditional sum of squares.
#[pyclass(name = "SarimaModel", frozen)]
struct PySarimaModel(baselines::SarimaModel);

#[pymethods]
impl PySarimaModel {
    #[new]
    fn fit(values: Vec<f64>, period: usize) -> PyResult<Self> {
        baselines::fit_sarima_ma(&values, period)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta
    }

    #[getter]
    fn seasonal_theta(&self) -> f64 {
        self.0.seasonal_theta
    }

    #[getter]
    fn residual_variance(&self) -> f64 {
        self.0.residual_variance
    }

    fn forecast(&self, history: Vec<f64>, actuals: Vec<f64>) -> PyResult<Vec<f64>> {
        baselines::forecast_sarima(&self.0, &history, &actuals).map_err(err)
    }
}

/// Runs a config file, writes its output files unless `write` is false,
/// and returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (config, seed = None, restarts = None, epochs = None, out_dir = None, write = true))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: PathBuf,
    seed: Option<u64>,
    restarts: Option<usize>,
    epochs: Option<usize>,
    out_dir: Option<PathBuf>,
    write: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let mut c = ExperimentConfig::load(&config).map_err(err)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    if let Some(r) = restarts {
        c.restarts = r;
    }
    if let Some(e) = epochs {
        c.set_epochs(e);
    }
    if let Some(d) = out_dir {
        c.output_dir = d;
    }
    let report = py
        .detach(|| {
            let report = experiment::run_experiment(&c)?;
            if write {
                report.write(&c.output_dir)?;
            }
            Ok(report)
        })
        .map_err(err)?;
    to_py(py, &report)
}

/// Comparison table (CSV text) from `report.json` paths.
#[pyfunction]
#[pyo3(signature = (reports, scale_mse = false, trainers = false))]
fn compare_table(reports: Vec<PathBuf>, scale_mse: bool, trainers: bool) -> PyResult<String> {
    let summaries = reports
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)
                .map_err(|e| PyValueError::new_err(format!("{}: {e}", p.display())))?;
            Summary::from_report_json(&text).map_err(err)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok(experiment::compare_table(
        &summaries,
        CompareOptions {
            scale_mse,
            trainers,
        },
    ))
}

#[pymodule]
fn pytsensemble(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetworkConfig>()?;
    m.add_class::<PyArModel>()?;
    m.add_class::<PySarimaModel>()?;
    m.add_function(wrap_pyfunction!(load_csv, m)?)?;
    m.add_function(wrap_pyfunction!(window, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(compute_weight, m)?)?;
    m.add_function(wrap_pyfunction!(combine, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(trainer_kinds, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(compare_table, m)?)?;
    Ok(())
}
