use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid layer spec: {0}")]
    InvalidLayer(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("empty batch")]
    EmptyBatch,

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid search space: {0}")]
    InvalidSpace(String),

    #[error("invalid genome {genome}: {reason}")]
    InvalidGenome { genome: String, reason: String },

    #[error("search space of size {size} exceeds enumeration cap {cap}")]
    SpaceTooLarge { size: u128, cap: u128 },

    #[error("no feasible genome under flops budget {budget}")]
    Infeasible { budget: u64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint search space does not match the expected space")]
    SpaceMismatch,

    #[error("kendall's tau undefined: {0}")]
    TauUndefined(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable tag used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::InvalidLayer(_) => "invalid_layer",
            Error::NonFinite(_) => "non_finite",
            Error::EmptyBatch => "empty_batch",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::UnknownPreset(_) => "unknown_preset",
            Error::InvalidSpace(_) => "invalid_space",
            Error::InvalidGenome { .. } => "invalid_genome",
            Error::SpaceTooLarge { .. } => "space_too_large",
            Error::Infeasible { .. } => "infeasible",
            Error::Config(_) => "config",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::Parse { .. } => "parse",
            Error::Checkpoint(_) => "checkpoint",
            Error::SpaceMismatch => "space_mismatch",
            Error::TauUndefined(_) => "tau_undefined",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::UnknownId(_) => "unknown_id",
            Error::Precondition(_) => "precondition",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
