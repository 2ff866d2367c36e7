//! Declarative experiments: a TOML config names a dataset, its transforms,
//! split, network and trainers; [`run_experiment`] runs the ensemble and a
//! linear baseline and returns a [`RunReport`] that writes itself out as
//! CSV, JSON and plain text.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::baselines::{self, ArModel, SarimaModel};
use crate::ensemble::{self, EnsembleOptions, EnsembleResult, Member};
use crate::error::{Error, Result};
use crate::mlp::NetworkConfig;
use crate::series::{self, ErrorTriple, SplitSpec, TimeSeries, TransformSpec};
use crate::trainers::{as_f64, as_usize, TrainerKind, TrainerSpec, DEFAULT_EPOCHS};

pub const DEFAULT_RESTARTS: usize = 50;
/// Hidden nodes of a seasonal network when the config leaves them out.
pub const DEFAULT_SEASONAL_HIDDEN: usize = 4;

/// A transform as written in a config. Rescale bounds left out are taken
/// from the in-sample (training plus validation) values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformConfig {
    Log10,
    Rescale {
        target_min: f64,
        target_max: f64,
        source_min: Option<f64>,
        source_max: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkShape {
    Plain {
        inputs: usize,
        hidden: usize,
        outputs: usize,
    },
    /// `(s, h, s)`: one seasonal block in, the next one out.
    Seasonal { period: usize, hidden: usize },
}

impl NetworkShape {
    pub fn config(&self) -> Result<NetworkConfig> {
        match *self {
            NetworkShape::Plain {
                inputs,
                hidden,
                outputs,
            } => NetworkConfig::new(inputs, hidden, outputs),
            NetworkShape::Seasonal { period, hidden } => NetworkConfig::seasonal(period, hidden),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineConfig {
    Ar {
        order: usize,
    },
    /// SARIMA(0,1,1)×(0,1,1) with the given period.
    Sarima {
        period: usize,
    },
}

impl BaselineConfig {
    pub fn label(&self) -> String {
        match *self {
            BaselineConfig::Ar { order } => format!("AR({order})"),
            BaselineConfig::Sarima { period } => format!("SARIMA(0,1,1)x(0,1,1){period}"),
        }
    }
}

/// Scale the headline metrics are reported on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportScale {
    /// After every configured transform.
    Working,
    /// Units of the dataset file.
    Original,
}

impl ReportScale {
    fn name(self) -> &'static str {
        match self {
            ReportScale::Working => "working",
            ReportScale::Original => "original",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: PathBuf,
    pub transforms: Vec<TransformConfig>,
    pub split: SplitSpec,
    pub network: NetworkShape,
    pub trainers: Vec<Member>,
    pub restarts: usize,
    pub seed: u64,
    pub warm_start: bool,
    pub baseline: Option<BaselineConfig>,
    pub output_dir: PathBuf,
    pub report_scale: ReportScale,
    /// Factor applied to MSE in scaled comparison tables.
    pub mse_display_scale: f64,
}

const TOP_KEYS: &[&str] = &[
    "name",
    "dataset",
    "transforms",
    "split",
    "network",
    "trainers",
    "restarts",
    "epochs",
    "seed",
    "warm_start",
    "baseline",
    "output_dir",
    "report_scale",
    "mse_display_scale",
];

impl ExperimentConfig {
    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("experiment");
        Self::from_toml(&text, base, stem)
    }

    /// Parses config text; `default_name` is used when `name` is absent.
    pub fn from_toml(text: &str, base: &Path, default_name: &str) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message()))?;
        for key in table.keys() {
            if !TOP_KEYS.contains(&key.as_str()) {
                return Err(Error::config(key.clone(), "unknown key"));
            }
        }
        let name = match table.get("name") {
            Some(v) => as_str(v, "name")?.to_string(),
            None => default_name.to_string(),
        };
        let dataset = base.join(as_str(required(&table, "dataset")?, "dataset")?);
        let transforms = match table.get("transforms") {
            None => Vec::new(),
            Some(v) => as_tables(v, "transforms")?
                .iter()
                .enumerate()
                .map(|(i, t)| parse_transform(t, &format!("transforms[{i}]")))
                .collect::<Result<_>>()?,
        };
        let split = parse_split(as_table(required(&table, "split")?, "split")?)?;
        let network = parse_network(as_table(required(&table, "network")?, "network")?)?;
        let epochs = match table.get("epochs") {
            Some(v) => as_usize(v, "epochs")?,
            None => DEFAULT_EPOCHS,
        };
        let trainers: Vec<Member> = match table.get("trainers") {
            None => TrainerKind::ENSEMBLE_SEVEN
                .iter()
                .map(|&k| Member::new(TrainerSpec::new(k).with_epochs(epochs)))
                .collect(),
            Some(v) => as_tables(v, "trainers")?
                .iter()
                .enumerate()
                .map(|(i, t)| parse_member(t, &format!("trainers[{i}]"), epochs))
                .collect::<Result<_>>()?,
        };
        check_labels(&trainers)?;
        let restarts = match table.get("restarts") {
            Some(v) => as_usize(v, "restarts")?,
            None => DEFAULT_RESTARTS,
        };
        if restarts == 0 {
            return Err(Error::config("restarts", "must be at least 1"));
        }
        let seed = match table.get("seed") {
            Some(v) => as_u64(v, "seed")?,
            None => 0,
        };
        let warm_start = match table.get("warm_start") {
            Some(Value::Boolean(b)) => *b,
            Some(_) => return Err(Error::config("warm_start", "must be true or false")),
            None => false,
        };
        let baseline = match table.get("baseline") {
            Some(v) => parse_baseline(as_table(v, "baseline")?)?,
            None => None,
        };
        let output_dir = match table.get("output_dir") {
            Some(v) => base.join(as_str(v, "output_dir")?),
            None => base.join("out").join(&name),
        };
        let report_scale = match table.get("report_scale").map(|v| as_str(v, "report_scale")) {
            None => ReportScale::Original,
            Some(Ok("working")) => ReportScale::Working,
            Some(Ok("original")) => ReportScale::Original,
            Some(Ok(other)) => {
                return Err(Error::config(
                    "report_scale",
                    format!("expected \"working\" or \"original\", got {other:?}"),
                ))
            }
            Some(Err(e)) => return Err(e),
        };
        let mse_display_scale = match table.get("mse_display_scale") {
            Some(v) => as_f64(v, "mse_display_scale")?,
            None => 1.0,
        };
        if !(mse_display_scale > 0.0 && mse_display_scale.is_finite()) {
            return Err(Error::config(
                "mse_display_scale",
                "must be positive and finite",
            ));
        }
        Ok(Self {
            name,
            dataset,
            transforms,
            split,
            network,
            trainers,
            restarts,
            seed,
            warm_start,
            baseline,
            output_dir,
            report_scale,
            mse_display_scale,
        })
    }

    /// Sets the epoch budget of every trainer.
    pub fn set_epochs(&mut self, epochs: usize) {
        for m in &mut self.trainers {
            m.spec.max_epochs = epochs;
        }
    }

    /// Loads the dataset and checks that the split and network fit it.
    /// Returns the raw series, the working series, and the transforms with
    /// every rescale bound filled in.
    pub fn prepare(&self) -> Result<(TimeSeries, TimeSeries, Vec<TransformConfig>)> {
        let raw = series::load_csv(&self.dataset)?;
        let s = self.split;
        if s.total() != raw.len() {
            return Err(Error::config(
                "split",
                format!(
                    "split.train + split.validation + split.test = {} + {} + {} = {} \
                     but the dataset has {} observations",
                    s.train,
                    s.validation,
                    s.test,
                    s.total(),
                    raw.len()
                ),
            ));
        }
        s.check(raw.len())
            .map_err(|e| Error::config("split", e.to_string()))?;
        let net = self
            .network
            .config()
            .map_err(|e| Error::config("network", e.to_string()))?;
        if s.train < net.inputs + net.outputs {
            return Err(Error::config(
                "network",
                format!(
                    "training segment of {} is too short for {} inputs and {} outputs",
                    s.train, net.inputs, net.outputs
                ),
            ));
        }
        let mut working = raw.clone();
        let mut resolved = Vec::with_capacity(self.transforms.len());
        for (i, t) in self.transforms.iter().enumerate() {
            let spec = match *t {
                TransformConfig::Log10 => TransformSpec::Log10,
                TransformConfig::Rescale {
                    target_min,
                    target_max,
                    source_min,
                    source_max,
                } => {
                    let in_sample = &working.values()[..s.in_sample()];
                    let TransformSpec::Rescale {
                        source_min: lo,
                        source_max: hi,
                        ..
                    } = TransformSpec::rescale_to(in_sample, target_min, target_max)
                    else {
                        unreachable!()
                    };
                    TransformSpec::Rescale {
                        source_min: source_min.unwrap_or(lo),
                        source_max: source_max.unwrap_or(hi),
                        target_min,
                        target_max,
                    }
                }
            };
            working = series::apply_transform(&working, &spec)
                .map_err(|e| Error::config(format!("transforms[{i}]"), e.to_string()))?;
            resolved.push(match spec {
                TransformSpec::Log10 => TransformConfig::Log10,
                TransformSpec::Rescale {
                    source_min,
                    source_max,
                    target_min,
                    target_max,
                } => TransformConfig::Rescale {
                    target_min,
                    target_max,
                    source_min: Some(source_min),
                    source_max: Some(source_max),
                },
            });
        }
        Ok((raw, working, resolved))
    }

    /// TOML text that [`ExperimentConfig::from_toml`] parses back into this
    /// config, with every trainer setting spelled out.
    pub fn to_toml(&self) -> String {
        let mut t = Table::new();
        t.insert("name".into(), self.name.clone().into());
        t.insert("dataset".into(), self.dataset.display().to_string().into());
        t.insert("seed".into(), u64_value(self.seed));
        t.insert("restarts".into(), Value::Integer(self.restarts as i64));
        t.insert("warm_start".into(), self.warm_start.into());
        t.insert("report_scale".into(), self.report_scale.name().into());
        t.insert("mse_display_scale".into(), self.mse_display_scale.into());
        t.insert(
            "output_dir".into(),
            self.output_dir.display().to_string().into(),
        );
        let mut split = Table::new();
        split.insert("train".into(), Value::Integer(self.split.train as i64));
        split.insert(
            "validation".into(),
            Value::Integer(self.split.validation as i64),
        );
        split.insert("test".into(), Value::Integer(self.split.test as i64));
        t.insert("split".into(), split.into());
        let mut net = Table::new();
        match self.network {
            NetworkShape::Plain {
                inputs,
                hidden,
                outputs,
            } => {
                net.insert("inputs".into(), Value::Integer(inputs as i64));
                net.insert("hidden".into(), Value::Integer(hidden as i64));
                net.insert("outputs".into(), Value::Integer(outputs as i64));
            }
            NetworkShape::Seasonal { period, hidden } => {
                net.insert("seasonal".into(), true.into());
                net.insert("period".into(), Value::Integer(period as i64));
                net.insert("hidden".into(), Value::Integer(hidden as i64));
            }
        }
        t.insert("network".into(), net.into());
        if let Some(b) = self.baseline {
            let mut bt = Table::new();
            match b {
                BaselineConfig::Ar { order } => {
                    bt.insert("kind".into(), "ar".into());
                    bt.insert("order".into(), Value::Integer(order as i64));
                }
                BaselineConfig::Sarima { period } => {
                    bt.insert("kind".into(), "sarima".into());
                    bt.insert("period".into(), Value::Integer(period as i64));
                }
            }
            t.insert("baseline".into(), bt.into());
        }
        let transforms: Vec<Value> = self
            .transforms
            .iter()
            .map(|tr| {
                let mut tt = Table::new();
                match *tr {
                    TransformConfig::Log10 => {
                        tt.insert("kind".into(), "log10".into());
                    }
                    TransformConfig::Rescale {
                        target_min,
                        target_max,
                        source_min,
                        source_max,
                    } => {
                        tt.insert("kind".into(), "rescale".into());
                        tt.insert("target_min".into(), target_min.into());
                        tt.insert("target_max".into(), target_max.into());
                        if let Some(v) = source_min {
                            tt.insert("source_min".into(), v.into());
                        }
                        if let Some(v) = source_max {
                            tt.insert("source_max".into(), v.into());
                        }
                    }
                }
                tt.into()
            })
            .collect();
        t.insert("transforms".into(), transforms.into());
        let trainers: Vec<Value> = self
            .trainers
            .iter()
            .map(|m| {
                let mut tt = m.spec.to_table();
                tt.insert("label".into(), m.label.clone().into());
                if let Some(seed) = m.seed {
                    tt.insert("seed".into(), u64_value(seed));
                }
                tt.into()
            })
            .collect();
        t.insert("trainers".into(), trainers.into());
        toml::to_string(&t).expect("a TOML table always serializes")
    }
}

fn u64_value(v: u64) -> Value {
    match i64::try_from(v) {
        Ok(i) => Value::Integer(i),
        Err(_) => Value::String(v.to_string()),
    }
}

fn required<'a>(t: &'a Table, key: &str) -> Result<&'a Value> {
    t.get(key).ok_or_else(|| Error::config(key, "missing"))
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| Error::config(path, "must be a string"))
}

fn as_table<'a>(v: &'a Value, path: &str) -> Result<&'a Table> {
    v.as_table()
        .ok_or_else(|| Error::config(path, "must be a table"))
}

fn as_tables<'a>(v: &'a Value, path: &str) -> Result<Vec<&'a Table>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::config(path, "must be an array of tables"))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| as_table(x, &format!("{path}[{i}]")))
        .collect()
}

/// Seeds may exceed `i64`, so a decimal string is accepted too.
fn as_u64(v: &Value, path: &str) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::String(s) => s
            .parse()
            .map_err(|_| Error::config(path, format!("{s:?} is not an unsigned 64-bit integer"))),
        _ => Err(Error::config(path, "must be a non-negative integer")),
    }
}

fn reject_unknown(t: &Table, path: &str, known: &[&str]) -> Result<()> {
    match t.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(Error::config(format!("{path}.{k}"), "unknown key")),
        None => Ok(()),
    }
}

fn parse_transform(t: &Table, path: &str) -> Result<TransformConfig> {
    let kind = as_str(
        t.get("kind")
            .ok_or_else(|| Error::config(format!("{path}.kind"), "missing"))?,
        &format!("{path}.kind"),
    )?;
    match kind {
        "log10" => {
            reject_unknown(t, path, &["kind"])?;
            Ok(TransformConfig::Log10)
        }
        "rescale" => {
            reject_unknown(
                t,
                path,
                &[
                    "kind",
                    "target_min",
                    "target_max",
                    "source_min",
                    "source_max",
                ],
            )?;
            let get = |k: &str, default: Option<f64>| -> Result<Option<f64>> {
                match t.get(k) {
                    Some(v) => as_f64(v, &format!("{path}.{k}")).map(Some),
                    None => Ok(default),
                }
            };
            let target_min = get("target_min", Some(0.1))?.expect("defaulted");
            let target_max = get("target_max", Some(0.9))?.expect("defaulted");
            if !(target_min < target_max) {
                return Err(Error::config(
                    format!("{path}.target_max"),
                    "must exceed target_min",
                ));
            }
            Ok(TransformConfig::Rescale {
                target_min,
                target_max,
                source_min: get("source_min", None)?,
                source_max: get("source_max", None)?,
            })
        }
        other => Err(Error::config(
            format!("{path}.kind"),
            format!("unknown transform {other:?}; expected \"log10\" or \"rescale\""),
        )),
    }
}

fn parse_split(t: &Table) -> Result<SplitSpec> {
    reject_unknown(t, "split", &["train", "validation", "test"])?;
    let get = |k: &str| {
        let path = format!("split.{k}");
        as_usize(
            t.get(k)
                .ok_or_else(|| Error::config(path.clone(), "missing"))?,
            &path,
        )
    };
    Ok(SplitSpec::new(
        get("train")?,
        get("validation")?,
        get("test")?,
    ))
}

fn parse_network(t: &Table) -> Result<NetworkShape> {
    reject_unknown(
        t,
        "network",
        &["inputs", "hidden", "outputs", "seasonal", "period"],
    )?;
    let get = |k: &str| -> Result<Option<usize>> {
        t.get(k)
            .map(|v| as_usize(v, &format!("network.{k}")))
            .transpose()
    };
    let seasonal = match t.get("seasonal") {
        Some(Value::Boolean(b)) => *b,
        Some(_) => return Err(Error::config("network.seasonal", "must be true or false")),
        None => false,
    };
    let shape = if seasonal {
        let period = get("period")?.ok_or_else(|| Error::config("network.period", "missing"))?;
        for k in ["inputs", "outputs"] {
            if let Some(n) = get(k)? {
                if n != period {
                    return Err(Error::config(
                        format!("network.{k}"),
                        format!("a seasonal network has {k} = period = {period}, got {n}"),
                    ));
                }
            }
        }
        NetworkShape::Seasonal {
            period,
            hidden: get("hidden")?.unwrap_or(DEFAULT_SEASONAL_HIDDEN),
        }
    } else {
        if t.contains_key("period") {
            return Err(Error::config(
                "network.period",
                "only valid with seasonal = true",
            ));
        }
        let need =
            |k: &str| get(k)?.ok_or_else(|| Error::config(format!("network.{k}"), "missing"));
        NetworkShape::Plain {
            inputs: need("inputs")?,
            hidden: need("hidden")?,
            outputs: get("outputs")?.unwrap_or(1),
        }
    };
    shape
        .config()
        .map_err(|e| Error::config("network", e.to_string()))?;
    Ok(shape)
}

fn parse_member(t: &Table, path: &str, epochs: usize) -> Result<Member> {
    let mut spec_table = t.clone();
    let label = spec_table.remove("label");
    let seed = spec_table.remove("seed");
    if !spec_table.contains_key("epochs") {
        spec_table.insert("epochs".into(), Value::Integer(epochs as i64));
    }
    let mut member = Member::new(TrainerSpec::from_table(&spec_table, path)?);
    if let Some(v) = label {
        member = member.with_label(as_str(&v, &format!("{path}.label"))?);
    }
    if let Some(v) = seed {
        member = member.with_seed(as_u64(&v, &format!("{path}.seed"))?);
    }
    Ok(member)
}

fn check_labels(members: &[Member]) -> Result<()> {
    if members.is_empty() {
        return Err(Error::config("trainers", "at least one trainer is needed"));
    }
    let mut seen = HashSet::new();
    for (i, m) in members.iter().enumerate() {
        let path = format!("trainers[{i}].label");
        if m.label.is_empty() || m.label.contains([',', '"', '\n', '\r']) {
            return Err(Error::config(
                path,
                "must be non-empty without commas, quotes or newlines",
            ));
        }
        if !seen.insert(m.label.as_str()) {
            return Err(Error::config(
                path,
                format!("duplicate label {:?}", m.label),
            ));
        }
    }
    Ok(())
}

fn parse_baseline(t: &Table) -> Result<Option<BaselineConfig>> {
    let enabled = match t.get("enabled") {
        Some(Value::Boolean(b)) => *b,
        Some(_) => return Err(Error::config("baseline.enabled", "must be true or false")),
        None => true,
    };
    let kind = as_str(
        t.get("kind")
            .ok_or_else(|| Error::config("baseline.kind", "missing"))?,
        "baseline.kind",
    )?;
    let get = |k: &str| {
        let path = format!("baseline.{k}");
        as_usize(
            t.get(k)
                .ok_or_else(|| Error::config(path.clone(), "missing"))?,
            &path,
        )
    };
    let b = match kind {
        "ar" => {
            reject_unknown(t, "baseline", &["kind", "order", "enabled"])?;
            BaselineConfig::Ar {
                order: get("order")?,
            }
        }
        "sarima" => {
            reject_unknown(t, "baseline", &["kind", "period", "enabled"])?;
            let period = get("period")?;
            if period < 2 {
                return Err(Error::config("baseline.period", "must be at least 2"));
            }
            BaselineConfig::Sarima { period }
        }
        other => {
            return Err(Error::config(
                "baseline.kind",
                format!("unknown baseline {other:?}; expected \"ar\" or \"sarima\""),
            ))
        }
    };
    Ok(enabled.then_some(b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineModel {
    Ar(ArModel),
    Sarima(SarimaModel),
}

/// Baseline fitted on the in-sample segment at the report scale, with
/// one-step forecasts of the test segment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineReport {
    pub label: String,
    pub scale: ReportScale,
    pub model: BaselineModel,
    /// On the report scale.
    pub forecast: Vec<f64>,
    pub forecast_original: Vec<f64>,
    pub errors: ErrorTriple,
    pub errors_original: ErrorTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledErrors {
    pub label: String,
    pub errors: ErrorTriple,
}

/// Headline numbers on the report scale; all `compare` needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub report_scale: ReportScale,
    pub mse_display_scale: f64,
    pub ensemble: ErrorTriple,
    pub baseline: Option<LabelledErrors>,
    pub trainers: Vec<LabelledErrors>,
}

impl Summary {
    /// Extracts the summary from the text of a `report.json`.
    pub fn from_report_json(text: &str) -> Result<Self> {
        let mut v: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Checkpoint(format!("report is not valid JSON: {e}")))?;
        let s = v
            .get_mut("summary")
            .map(serde_json::Value::take)
            .ok_or_else(|| Error::Checkpoint("report has no `summary`".into()))?;
        serde_json::from_value(s).map_err(|e| Error::Checkpoint(format!("malformed summary: {e}")))
    }
}

/// Test MAPE of one refit run, on the report scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainerMape {
    pub label: String,
    pub restart: usize,
    pub seed: u64,
    pub final_loss: f64,
    pub mape: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timings {
    pub ensemble_seconds: f64,
    pub baseline_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    /// The config with every default and rescale bound filled in.
    pub config: ExperimentConfig,
    pub config_toml: String,
    pub summary: Summary,
    pub ensemble: EnsembleResult,
    pub baseline: Option<BaselineReport>,
    pub baseline_error: Option<String>,
    pub trainer_mape: Vec<TrainerMape>,
    pub timings: Timings,
}

/// Loads the data, trains the ensemble, fits the baseline.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    let (raw, working, resolved) = config.prepare()?;
    let mut config = config.clone();
    config.transforms = resolved;
    let network = config.network.config()?;
    let options = EnsembleOptions {
        restarts: config.restarts,
        seed: config.seed,
        warm_start: config.warm_start,
    };
    info!(
        "{}: {} trainers x {} restarts, network ({}, {}, {})",
        config.name,
        config.trainers.len(),
        config.restarts,
        network.inputs,
        network.hidden,
        network.outputs
    );
    let ens = ensemble::run_ensemble(&working, config.split, network, &config.trainers, &options)?;
    let ensemble_seconds = start.elapsed().as_secs_f64();

    let t_base = Instant::now();
    let report_series = match config.report_scale {
        ReportScale::Working => &working,
        ReportScale::Original => &raw,
    };
    let (baseline, baseline_error) = match config.baseline {
        None => (None, None),
        Some(b) => match fit_baseline(
            b,
            report_series,
            &working,
            config.split,
            config.report_scale,
        ) {
            Ok(r) => (Some(r), None),
            Err(e) => {
                warn!("{}: baseline {} failed: {e}", config.name, b.label());
                (None, Some(e.to_string()))
            }
        },
    };
    let baseline_seconds = t_base.elapsed().as_secs_f64();

    let original = config.report_scale == ReportScale::Original;
    let pick = |w: ErrorTriple, o: ErrorTriple| if original { o } else { w };
    let summary = Summary {
        name: config.name.clone(),
        report_scale: config.report_scale,
        mse_display_scale: config.mse_display_scale,
        ensemble: pick(ens.combined_errors, ens.combined_errors_original),
        baseline: baseline.as_ref().map(|b| LabelledErrors {
            label: b.label.clone(),
            errors: b.errors,
        }),
        trainers: ens
            .members
            .iter()
            .map(|m| LabelledErrors {
                label: m.label.clone(),
                errors: pick(m.test_errors, m.test_errors_original),
            })
            .collect(),
    };
    let trainer_mape = ens
        .members
        .iter()
        .flat_map(|m| {
            m.refit.iter().filter_map(move |o| {
                let e = if original {
                    o.test_errors_original
                } else {
                    o.test_errors
                }?;
                Some(TrainerMape {
                    label: m.label.clone(),
                    restart: o.restart,
                    seed: o.seed,
                    final_loss: o.final_loss,
                    mape: e.mape,
                })
            })
        })
        .collect();
    Ok(RunReport {
        config_toml: config.to_toml(),
        config,
        summary,
        ensemble: ens,
        baseline,
        baseline_error,
        trainer_mape,
        timings: Timings {
            ensemble_seconds,
            baseline_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

fn fit_baseline(
    b: BaselineConfig,
    report_series: &TimeSeries,
    working: &TimeSeries,
    split: SplitSpec,
    scale: ReportScale,
) -> Result<BaselineReport> {
    let (history, test) = report_series.values().split_at(split.in_sample());
    let (model, forecast) = match b {
        BaselineConfig::Ar { order } => {
            let m = baselines::fit_ar(history, order)?;
            let f = baselines::forecast_ar(&m, history, test)?;
            (BaselineModel::Ar(m), f)
        }
        BaselineConfig::Sarima { period } => {
            let m = baselines::fit_sarima_ma(history, period)?;
            let f = baselines::forecast_sarima(&m, history, test)?;
            (BaselineModel::Sarima(m), f)
        }
    };
    let forecast_original = match scale {
        ReportScale::Working => working.to_original_scale(&forecast),
        ReportScale::Original => forecast.clone(),
    };
    let test_original = match scale {
        ReportScale::Working => working.to_original_scale(test),
        ReportScale::Original => test.to_vec(),
    };
    Ok(BaselineReport {
        label: b.label(),
        scale,
        model,
        errors: series::metrics(test, &forecast)?,
        errors_original: series::metrics(&test_original, &forecast_original)?,
        forecast,
        forecast_original,
    })
}

/// `index,actual,combined,<one column per trainer>` on the original scale.
/// `index` is the position of the observation in the full series.
pub fn forecast_diagram_csv(result: &EnsembleResult) -> String {
    let mut out = String::from("index,actual,combined");
    for m in &result.members {
        out.push(',');
        out.push_str(&m.label);
    }
    out.push('\n');
    let first = result.split.in_sample();
    for (i, (a, c)) in result
        .test_actual_original
        .iter()
        .zip(&result.combined_original)
        .enumerate()
    {
        write!(out, "{},{a},{c}", first + i).unwrap();
        for m in &result.members {
            write!(out, ",{}", m.forecast_original[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes [`forecast_diagram_csv`] to `path` atomically.
pub fn emit_forecast_diagram_data(result: &EnsembleResult, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), forecast_diagram_csv(result).as_bytes())
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| Error::Io { path: p, source }
    };
    fs::write(&tmp, contents).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

impl RunReport {
    /// `model,scale,mae,mse,mape`: the ensemble and every trainer on both
    /// scales, the baseline on the scale it was fitted on and the original.
    pub fn errors_csv(&self) -> String {
        let mut out = String::from("model,scale,mae,mse,mape\n");
        let mut row = |model: &str, scale: &str, e: &ErrorTriple| {
            writeln!(out, "{model},{scale},{},{},{}", e.mae, e.mse, e.mape).unwrap();
        };
        let ens = &self.ensemble;
        row("ensemble", "working", &ens.combined_errors);
        row("ensemble", "original", &ens.combined_errors_original);
        for m in &ens.members {
            row(&m.label, "working", &m.test_errors);
            row(&m.label, "original", &m.test_errors_original);
        }
        if let Some(b) = &self.baseline {
            if b.scale == ReportScale::Working {
                row("baseline", "working", &b.errors);
            }
            row("baseline", "original", &b.errors_original);
        }
        out
    }

    pub fn forecasts_csv(&self) -> String {
        forecast_diagram_csv(&self.ensemble)
    }

    /// `index,actual,baseline` on the original scale.
    pub fn baseline_csv(&self) -> Option<String> {
        let b = self.baseline.as_ref()?;
        let first = self.ensemble.split.in_sample();
        let mut out = String::from("index,actual,baseline\n");
        for (i, (a, f)) in self
            .ensemble
            .test_actual_original
            .iter()
            .zip(&b.forecast_original)
            .enumerate()
        {
            writeln!(out, "{},{a},{f}", first + i).unwrap();
        }
        Some(out)
    }

    /// `trainer,restart,seed,final_loss,mape`, one row per refit run.
    pub fn trainer_mape_csv(&self) -> String {
        let mut out = String::from("trainer,restart,seed,final_loss,mape\n");
        for r in &self.trainer_mape {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.label, r.restart, r.seed, r.final_loss, r.mape
            )
            .unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable summary.
    pub fn text(&self) -> String {
        let c = &self.config;
        let e = &self.ensemble;
        let mut out = String::new();
        writeln!(out, "experiment: {}", c.name).unwrap();
        writeln!(out, "dataset:    {}", c.dataset.display()).unwrap();
        writeln!(
            out,
            "split:      train {} / validation {} / test {}",
            c.split.train, c.split.validation, c.split.test
        )
        .unwrap();
        writeln!(
            out,
            "network:    ({}, {}, {})",
            e.config.inputs, e.config.hidden, e.config.outputs
        )
        .unwrap();
        writeln!(
            out,
            "restarts:   {}   seed: {}   warm start: {}",
            c.restarts, c.seed, c.warm_start
        )
        .unwrap();
        writeln!(out, "scale:      {}\n", c.report_scale.name()).unwrap();
        writeln!(
            out,
            "{:<34} {:>12} {:>14} {:>10} {:>10}",
            "model", "MAE", "MSE", "MAPE", "weight"
        )
        .unwrap();
        let total_w: f64 = e.weights().iter().sum();
        let line = |out: &mut String, label: &str, err: &ErrorTriple, w: Option<f64>| {
            let w = w.map(|w| format!("{:.4}", w / total_w)).unwrap_or_default();
            writeln!(
                out,
                "{label:<34} {:>12.6} {:>14.6} {:>10.4} {w:>10}",
                err.mae, err.mse, err.mape
            )
            .unwrap();
        };
        line(&mut out, "ensemble", &self.summary.ensemble, None);
        if let Some(b) = &self.summary.baseline {
            line(&mut out, &b.label, &b.errors, None);
        }
        for (t, m) in self.summary.trainers.iter().zip(&e.members) {
            line(&mut out, &t.label, &t.errors, Some(m.evaluation.w));
        }
        if let Some(err) = &self.baseline_error {
            writeln!(out, "\nbaseline failed: {err}").unwrap();
        }
        for d in &e.dropped {
            writeln!(out, "dropped {}: {}", d.label, d.error).unwrap();
        }
        writeln!(
            out,
            "\ntime: ensemble {:.1}s, baseline {:.2}s, total {:.1}s",
            self.timings.ensemble_seconds,
            self.timings.baseline_seconds,
            self.timings.total_seconds
        )
        .unwrap();
        out
    }

    /// Writes every output file into `dir`, creating it if needed, and
    /// returns their paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut files = vec![
            ("report.txt", self.text()),
            ("report.json", self.to_json()),
            ("config.toml", self.config_toml.clone()),
            ("errors.csv", self.errors_csv()),
            ("forecasts.csv", self.forecasts_csv()),
            ("trainer_mape.csv", self.trainer_mape_csv()),
        ];
        if let Some(b) = self.baseline_csv() {
            files.push(("baseline.csv", b));
        }
        files
            .into_iter()
            .map(|(name, text)| {
                let path = dir.join(name);
                write_atomic(&path, text.as_bytes())?;
                Ok(path)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CompareOptions {
    /// Multiply MSE by each dataset's `mse_display_scale`.
    pub scale_mse: bool,
    /// Add one column per trainer.
    pub trainers: bool,
}

/// CSV table with rows `dataset × {MSE, MAPE}` and columns baseline,
/// ensemble and optionally every trainer label seen.
pub fn compare_table(summaries: &[Summary], options: CompareOptions) -> String {
    let mut labels: Vec<&str> = Vec::new();
    if options.trainers {
        for s in summaries {
            for t in &s.trainers {
                if !labels.contains(&t.label.as_str()) {
                    labels.push(&t.label);
                }
            }
        }
    }
    let mut out = String::from("dataset,metric,baseline,ensemble");
    for l in &labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    let fmt = |x: f64| format!("{x:.6}");
    for s in summaries {
        let factor = if options.scale_mse {
            s.mse_display_scale
        } else {
            1.0
        };
        let metrics: [(&str, fn(&ErrorTriple) -> f64, f64); 2] =
            [("MSE", |e| e.mse, factor), ("MAPE", |e| e.mape, 1.0)];
        for (metric, get, factor) in metrics {
            let cell =
                |e: Option<&ErrorTriple>| e.map(|e| fmt(get(e) * factor)).unwrap_or_default();
            write!(
                out,
                "{},{metric},{},{}",
                s.name,
                cell(s.baseline.as_ref().map(|b| &b.errors)),
                cell(Some(&s.ensemble))
            )
            .unwrap();
            for l in &labels {
                let e = s.trainers.iter().find(|t| t.label == *l).map(|t| &t.errors);
                write!(out, ",{}", cell(e)).unwrap();
            }
            out.push('\n');
        }
    }
    out
}
