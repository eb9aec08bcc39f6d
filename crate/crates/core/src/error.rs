use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: file not found")]
    MissingFile { path: PathBuf },

    #[error("{path}: i/o error: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed line: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: feature rows ({rows}) do not match declared node count ({n_nodes})")]
    FeatureRowMismatch {
        path: PathBuf,
        rows: usize,
        n_nodes: usize,
    },

    #[error("{path}:{line}: label {label} out of range for {n_classes} classes")]
    LabelOutOfRange {
        path: PathBuf,
        line: usize,
        label: i64,
        n_classes: usize,
    },

    #[error("{path}: {reason}")]
    InvalidDataset { path: PathBuf, reason: String },

    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("graph has no labels")]
    LabelsAbsent,

    #[error("class {class} has {available} labeled nodes, need at least {required}")]
    InsufficientClass {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("requested dimension {requested} exceeds bound {bound}")]
    DimensionTooLarge { requested: usize, bound: usize },

    #[error("matrix of order {n} exceeds dense eigensolver limit {limit}")]
    TooLargeForDense { n: usize, limit: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("eigensolver failed to converge")]
    NoConvergence,

    #[error("zero signal: {0}")]
    ZeroSignal(&'static str),

    #[error("frequency {0} outside [0, 2]")]
    FrequencyOutOfRange(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite loss at epoch {epoch}: {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },

    #[error("frozen model violated: expected hash {expected}, found {found}")]
    FrozenViolation { expected: String, found: String },

    #[error("model is frozen; mutation refused")]
    Frozen,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("unknown ablation variant `{0}`")]
    UnknownVariant(String),

    #[error("empty mask")]
    EmptyMask,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path }
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// True for errors caused by bad input data rather than numerics or usage.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MissingFile { .. }
                | Error::Io { .. }
                | Error::MalformedLine { .. }
                | Error::FeatureRowMismatch { .. }
                | Error::LabelOutOfRange { .. }
                | Error::InvalidDataset { .. }
                | Error::LabelsAbsent
                | Error::InsufficientClass { .. }
                | Error::Checkpoint(_)
        )
    }

    pub fn is_numeric_error(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence
                | Error::ZeroSignal(_)
                | Error::NonFiniteLoss { .. }
                | Error::FrozenViolation { .. }
                | Error::NotSymmetric { .. }
        )
    }
}
