use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::TensorShape;

/// Errors produced by tensor arithmetic, the correction engine, the synthetic
/// world generator and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch {
        left: TensorShape,
        right: TensorShape,
    },

    #[error("shape mismatch at day {day}: {left} vs {right}")]
    ShapeMismatchAtDay {
        day: usize,
        left: TensorShape,
        right: TensorShape,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("non-finite loss for expert {expert}")]
    NonFiniteLoss { expert: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("day {found} is out of order (previous day {previous})")]
    DayOrder { previous: u64, found: u64 },

    #[error("region count mismatch: tensor has {found}, graph has {expected}")]
    RegionCount { expected: usize, found: usize },

    #[error("unknown region id {id:?} in {path}")]
    UnknownRegion { id: String, path: PathBuf },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
