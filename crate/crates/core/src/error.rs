use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("target column `{0}` not found in header")]
    MissingTargetColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a finite number")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: price {value} is not strictly positive, log transform undefined")]
    NonPositivePrice { row: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("too few rows: need at least {needed}, have {have}")]
    TooFewRows { needed: usize, have: usize },

    #[error("window capacity {capacity} is below the minimum of 4 rows")]
    WindowTooSmall { capacity: usize },

    #[error("push into a window that is not full ({len} of {capacity})")]
    WindowNotFull { len: usize, capacity: usize },

    #[error("r2 undefined: all true values are identical")]
    ZeroVariance,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("empty input")]
    Empty,

    #[error("singular normal equations (alpha = 0 on rank-deficient features)")]
    SingularSystem,

    #[error("hyperparameter grid is empty")]
    EmptyGrid,

    #[error("unknown hyperparameter `{name}` for {family}")]
    UnknownHyperparameter { name: String, family: String },

    #[error("internal error: training huber loss increased at iteration {iteration} ({before} -> {after})")]
    LossIncreased {
        iteration: usize,
        before: f64,
        after: f64,
    },

    #[error("non-finite value entered the window at step {step} (row {row_id})")]
    NonFiniteWindow { step: usize, row_id: usize },

    #[error("run p={p}, s={s}, M={steps_per_round}, model={family}: {source}")]
    SweepRun {
        p: f64,
        s: f64,
        steps_per_round: usize,
        family: String,
        #[source]
        source: Box<Error>,
    },
}
