use std::path::PathBuf;

use crate::alignment::DescriptionKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("configuration error at `{field}`: {message}")]
    Configuration { field: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: u64, actual: u64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("trace has no run with role `{0}`")]
    MissingRun(String),

    #[error("tensor `{tensor}` has unsupported dtype {dtype}")]
    UnsupportedDtype { tensor: String, dtype: String },

    #[error("storage error on {path:?}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("upstream request failed: {0}")]
    Upstream(String),

    #[error("description does not match `<head> with <a>, <b>, <c>`: {0}")]
    DescriptionFormat(String),

    #[error("description has {words} words, limit is {limit}")]
    DescriptionLength { words: usize, limit: usize },

    #[error("description lists {found} features, at least 3 are required")]
    FeatureCount { found: usize },

    #[error(
        "{kind} refinement failed after {attempts} attempts; last response: {last_response:?}"
    )]
    RefinementFailed {
        kind: DescriptionKind,
        attempts: usize,
        last_response: String,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Configuration {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn storage(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Storage {
            path: path.into(),
            source,
        }
    }

    /// True for the three validator rejections (shape, length, feature count).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DescriptionFormat(_)
                | Error::DescriptionLength { .. }
                | Error::FeatureCount { .. }
        )
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Configuration { .. } => 2,
            Error::Format(_)
            | Error::TruncatedPayload { .. }
            | Error::Data(_)
            | Error::MissingRun(_)
            | Error::UnsupportedDtype { .. }
            | Error::InvalidInput(_)
            | Error::DegenerateTarget(_)
            | Error::Storage { .. } => 3,
            Error::Upstream(_) => 4,
            Error::DescriptionFormat(_)
            | Error::DescriptionLength { .. }
            | Error::FeatureCount { .. }
            | Error::RefinementFailed { .. } => 5,
        }
    }
}
