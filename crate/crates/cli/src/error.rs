use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at line {line}{}: {message}", if column.is_empty() { String::new() } else { format!(", column '{column}'") })]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("missing value at line {line}, column '{column}'")]
    MissingValue { line: usize, column: String },

    #[error("panel has no usable rows or columns")]
    EmptyPanel,

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Model(#[from] mgarch::Error),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn csv(e: csv::Error) -> Self {
        Self::Config(format!("csv: {e}"))
    }

    pub fn json(e: serde_json::Error) -> Self {
        Self::Config(format!("json: {e}"))
    }

    /// Whether this is an estimation failure rather than bad input.
    pub fn is_convergence(&self) -> bool {
        matches!(self, Self::Model(mgarch::Error::NoConvergence(_)))
    }
}
