use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("cannot read {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid field `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("{path}: {source}")]
    Domain {
        path: String,
        #[source]
        source: csm_core::Error,
    },

    #[error("usage: {0}")]
    Usage(String),
}

impl ScenarioError {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ScenarioError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(path: impl Into<String>) -> impl FnOnce(csm_core::Error) -> Self {
        let path = path.into();
        move |source| ScenarioError::Domain { path, source }
    }
}
