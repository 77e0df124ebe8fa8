// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Errors produced by model construction, table building, fitting, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two objects that must agree on a dimension did not.
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A computation would exceed a configured size bound.
    #[error("resource bound exceeded: {what} needs more than {bound}")]
    Resource { what: &'static str, bound: usize },

    /// A ratio was requested whose denominator is zero.
    #[error("ratio `{ratio}` is undefined: denominator {denominator} is zero")]
    ZeroDenominator {
        ratio: &'static str,
        denominator: &'static str,
    },

    /// A record file is malformed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// File system failure, tagged with the path involved.
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Self::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;
