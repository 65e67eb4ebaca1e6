// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corpus {0} contains no valid records")]
    EmptyCorpus(PathBuf),

    #[error("cache entry {key} already holds a different value")]
    CacheConflict { key: String },

    #[error("no fenced code block defining `create_fn_inputs` in model response")]
    ParseFailure,

    #[error("judge response has no usable DIFFERENCES line: {0}")]
    FilterParseFailure(String),

    #[error("model call failed after {attempts} attempt(s): {message}")]
    BudgetedCallFailure { attempts: u32, message: String },

    #[error("harness failure: {0}")]
    Harness(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
