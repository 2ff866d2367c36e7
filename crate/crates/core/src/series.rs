//! Series ingestion, reversible transforms, chronological splits, lag windows
//! and the three forecast error measures.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ordered, finite, non-empty sequence of observations together with the
/// transforms that produced it from the raw data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    name: String,
    values: Vec<f64>,
    transform_log: Vec<TransformSpec>,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        validate(&values)?;
        Ok(Self {
            name: name.into(),
            values,
            transform_log: Vec::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false for a constructed series; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Transforms applied so far, oldest first.
    pub fn transform_log(&self) -> &[TransformSpec] {
        &self.transform_log
    }

    /// Maps values on this series' scale back to the raw scale by inverting
    /// the whole transform log, newest first.
    pub fn to_original_scale(&self, values: &[f64]) -> Vec<f64> {
        self.transform_log
            .iter()
            .rev()
            .fold(values.to_vec(), |acc, t| t.invert_values(&acc))
    }

    /// Maps raw-scale values onto this series' scale by replaying the log.
    pub fn to_working_scale(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.transform_log
            .iter()
            .try_fold(values.to_vec(), |acc, t| t.apply_values(&acc))
    }

    fn with_values(&self, name: String, values: Vec<f64>) -> Self {
        Self {
            name,
            values,
            transform_log: self.transform_log.clone(),
        }
    }
}

impl AsRef<[f64]> for TimeSeries {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

fn validate(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

/// A deterministic, exactly invertible value transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    Log10,
    /// Affine map sending `[source_min, source_max]` onto `[target_min, target_max]`.
    Rescale {
        source_min: f64,
        source_max: f64,
        target_min: f64,
        target_max: f64,
    },
}

impl TransformSpec {
    /// Rescale whose source range is the min/max of `values`.
    pub fn rescale_to(values: &[f64], target_min: f64, target_max: f64) -> Self {
        let source_min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let source_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        TransformSpec::Rescale {
            source_min,
            source_max,
            target_min,
            target_max,
        }
    }

    pub fn apply_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        match *self {
            TransformSpec::Log10 => values
                .iter()
                .enumerate()
                .map(|(index, &v)| {
                    if v > 0.0 {
                        Ok(v.log10())
                    } else {
                        Err(Error::NonPositiveLog { index, value: v })
                    }
                })
                .collect(),
            TransformSpec::Rescale {
                source_min,
                source_max,
                target_min,
                target_max,
            } => {
                let width = source_max - source_min;
                if !(width.abs() > 0.0) || !width.is_finite() {
                    return Err(Error::DegenerateRescale {
                        min: source_min,
                        max: source_max,
                    });
                }
                let span = target_max - target_min;
                Ok(values
                    .iter()
                    .map(|&v| target_min + (v - source_min) / width * span)
                    .collect())
            }
        }
    }

    /// Inverse map. Never fails: a valid transform is a bijection onto its image.
    pub fn invert_values(&self, values: &[f64]) -> Vec<f64> {
        match *self {
            TransformSpec::Log10 => values.iter().map(|&v| 10f64.powf(v)).collect(),
            TransformSpec::Rescale {
                source_min,
                source_max,
                target_min,
                target_max,
            } => {
                let width = source_max - source_min;
                let span = target_max - target_min;
                values
                    .iter()
                    .map(|&v| source_min + (v - target_min) / span * width)
                    .collect()
            }
        }
    }
}

/// Applies `spec` to every value and appends it to the transform log.
pub fn apply_transform(series: &TimeSeries, spec: &TransformSpec) -> Result<TimeSeries> {
    if let TransformSpec::Rescale {
        target_min,
        target_max,
        ..
    } = *spec
    {
        if !(target_max - target_min).is_finite() || target_max == target_min {
            return Err(Error::DegenerateRescale {
                min: target_min,
                max: target_max,
            });
        }
    }
    let values = spec.apply_values(&series.values)?;
    validate(&values)?;
    let mut out = series.with_values(series.name.clone(), values);
    out.transform_log.push(*spec);
    Ok(out)
}

/// Undoes `spec`, which must be the most recent entry of the transform log.
pub fn invert_transform(series: &TimeSeries, spec: &TransformSpec) -> Result<TimeSeries> {
    let last = series
        .transform_log
        .last()
        .ok_or(Error::EmptyTransformLog)?;
    if last != spec {
        return Err(Error::TransformMismatch);
    }
    let values = spec.invert_values(&series.values);
    validate(&values)?;
    let mut out = series.with_values(series.name.clone(), values);
    out.transform_log.pop();
    Ok(out)
}

/// Reads one observation per row. A header line and a leading date column
/// are both optional; see the crate README for the accepted layouts.
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".to_string());
    let values = parse_rows(path, &text)?;
    TimeSeries::new(name, values)
}

fn parse_rows(path: &Path, text: &str) -> Result<Vec<f64>> {
    let mut rows: Vec<&str> = text
        .split('\n')
        .map(|r| r.strip_suffix('\r').unwrap_or(r))
        .collect();
    // "a\nb\n" splits into [a, b, ""]; one further blank line is tolerated.
    if rows.last().is_some_and(|r| r.is_empty()) {
        rows.pop();
    }
    if rows.last().is_some_and(|r| r.trim().is_empty()) {
        rows.pop();
    }

    let mut values = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let row_no = i + 1;
        if row.trim().is_empty() {
            return Err(Error::BlankRow {
                path: path.to_path_buf(),
                row: row_no,
            });
        }
        let field = match row.split_once(',') {
            Some((_, value)) => value,
            None => row,
        }
        .trim();
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ if i == 0 => {} // header
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row: row_no,
                    content: row.to_string(),
                })
            }
        }
    }
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(values)
}

/// Lengths of the three chronological segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitSpec {
    pub fn new(train: usize, validation: usize, test: usize) -> Self {
        Self {
            train,
            validation,
            test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }

    /// Training and validation together.
    pub fn in_sample(&self) -> usize {
        self.train + self.validation
    }

    pub fn check(&self, len: usize) -> Result<()> {
        for (name, n) in [
            ("train", self.train),
            ("validation", self.validation),
            ("test", self.test),
        ] {
            if n == 0 {
                return Err(Error::EmptySegment(name));
            }
        }
        if self.total() != len {
            return Err(Error::SplitMismatch {
                train: self.train,
                validation: self.validation,
                test: self.test,
                sum: self.total(),
                len,
            });
        }
        Ok(())
    }
}

/// Training, validation and test segments of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct Segments {
    pub train: TimeSeries,
    pub validation: TimeSeries,
    pub test: TimeSeries,
}

pub fn split(series: &TimeSeries, spec: SplitSpec) -> Result<Segments> {
    spec.check(series.len())?;
    let v = series.values();
    let (train, rest) = v.split_at(spec.train);
    let (validation, test) = rest.split_at(spec.validation);
    let part = |suffix: &str, vals: &[f64]| {
        series.with_values(format!("{}/{}", series.name, suffix), vals.to_vec())
    };
    Ok(Segments {
        train: part("train", train),
        validation: part("validation", validation),
        test: part("test", test),
    })
}

/// Input/target pairs cut from a series with a sliding window, stored
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    p: usize,
    q: usize,
}

impl PatternSet {
    /// Builds a pattern set from explicit rows.
    pub fn new(p: usize, q: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::InvalidNetwork(
                "pattern widths must be at least 1".into(),
            ));
        }
        if !inputs.len().is_multiple_of(p) {
            return Err(Error::Dimension {
                what: "pattern inputs",
                expected: p * (inputs.len() / p + 1),
                got: inputs.len(),
            });
        }
        let n = inputs.len() / p;
        if targets.len() != n * q {
            return Err(Error::Dimension {
                what: "pattern targets",
                expected: n * q,
                got: targets.len(),
            });
        }
        Ok(Self {
            inputs,
            targets,
            p,
            q,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.p
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.p
    }

    pub fn output_width(&self) -> usize {
        self.q
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.p..(i + 1) * self.p]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.q..(i + 1) * self.q]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        self.inputs
            .chunks_exact(self.p)
            .zip(self.targets.chunks_exact(self.q))
    }

    /// Copy with every target multiplied by `factor`.
    pub fn scaled_targets(&self, factor: f64) -> Self {
        Self {
            targets: self.targets.iter().map(|t| t * factor).collect(),
            ..self.clone()
        }
    }
}

/// Stride-1 windows: input `i` is `values[i..i+p]`, target `i` is the `q`
/// values that follow it. Yields `N - p - q + 1` patterns.
pub fn window(values: &[f64], p: usize, q: usize) -> Result<PatternSet> {
    if p == 0 || q == 0 {
        return Err(Error::InvalidNetwork(
            "window widths must be at least 1".into(),
        ));
    }
    let n = values.len();
    if n < p + q {
        return Err(Error::SeriesTooShort {
            len: n,
            needed: p + q,
        });
    }
    let count = n - p - q + 1;
    let mut inputs = Vec::with_capacity(count * p);
    let mut targets = Vec::with_capacity(count * q);
    for i in 0..count {
        inputs.extend_from_slice(&values[i..i + p]);
        targets.extend_from_slice(&values[i + p..i + p + q]);
    }
    PatternSet::new(p, q, inputs, targets)
}

/// Mean absolute, mean squared and mean absolute percentage error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTriple {
    pub mae: f64,
    pub mse: f64,
    /// In percent.
    pub mape: f64,
}

impl ErrorTriple {
    pub fn sum(&self) -> f64 {
        self.mae + self.mse + self.mape
    }
}

pub fn metrics(actual: &[f64], forecast: &[f64]) -> Result<ErrorTriple> {
    if actual.len() != forecast.len() {
        return Err(Error::LengthMismatch {
            expected: actual.len(),
            got: forecast.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::EmptySeries);
    }
    if let Some(index) = actual.iter().position(|&a| a == 0.0) {
        return Err(Error::ZeroActual { index });
    }
    let n = actual.len() as f64;
    let (mut abs, mut sq, mut pct) = (0.0, 0.0, 0.0);
    for (&y, &f) in actual.iter().zip(forecast) {
        let e = y - f;
        abs += e.abs();
        sq += e * e;
        pct += (e / y).abs();
    }
    Ok(ErrorTriple {
        mae: abs / n,
        mse: sq / n,
        mape: pct / n * 100.0,
    })
}
