use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}: cannot parse {content:?} as a finite number")]
    Parse {
        path: PathBuf,
        row: usize,
        content: String,
    },

    #[error("{path}: row {row} is blank")]
    BlankRow { path: PathBuf, row: usize },

    #[error("series is empty")]
    EmptySeries,

    #[error("value at index {index} is not finite")]
    NonFinite { index: usize },

    #[error("log10 needs strictly positive values; index {index} holds {value}")]
    NonPositiveLog { index: usize, value: f64 },

    #[error("rescale source range [{min}, {max}] has zero width")]
    DegenerateRescale { min: f64, max: f64 },

    #[error("transform log is empty; nothing to invert")]
    EmptyTransformLog,

    #[error("transform to invert does not match the most recent entry of the transform log")]
    TransformMismatch,

    #[error(
        "split lengths train={train} + validation={validation} + test={test} = {sum} \
         do not match series length {len}"
    )]
    SplitMismatch {
        train: usize,
        validation: usize,
        test: usize,
        sum: usize,
        len: usize,
    },

    #[error("split segment `{0}` must contain at least one observation")]
    EmptySegment(&'static str),

    #[error("series of length {len} is too short: need at least {needed}")]
    SeriesTooShort { len: usize, needed: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("MAPE undefined: actual value at index {index} is zero")]
    ZeroActual { index: usize },

    #[error("{what}: expected dimension {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid network shape: {0}")]
    InvalidNetwork(String),

    #[error("invalid hyperparameter `{name}`: {reason}")]
    InvalidHyperparameter { name: &'static str, reason: String },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("linear solve failed with damping mu = {mu:e}")]
    LinearSolve { mu: f64 },

    #[error("{0} needs a residual (least-squares) objective")]
    ResidualsRequired(&'static str),

    #[error("design matrix is rank deficient (condition estimate {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("combination needs at least one forecast")]
    EmptyEnsemble,

    #[error("weight {index} is not strictly positive ({value})")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("every trainer failed: {0}")]
    NoSurvivingTrainer(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config `{field}`: {message}")]
    Config { field: String, message: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
