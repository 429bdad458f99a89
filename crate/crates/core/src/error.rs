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

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema: {0}")]
    Schema(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    MalformedCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{column}` is {found}, expected {expected}")]
    ColumnKind {
        column: String,
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid_data(msg: impl Into<String>) -> Self {
        Error::InvalidData(msg.into())
    }

    pub(crate) fn invalid_param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code for the CLI: 1 data, 2 configuration, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Csv(_)
            | Error::MalformedCell { .. }
            | Error::InvalidData(_)
            | Error::UnknownColumn(_)
            | Error::ColumnKind { .. } => 1,
            Error::Schema(_) | Error::InvalidParam(_) => 2,
            Error::Numeric(_) => 3,
            Error::Fold { source, .. } => source.exit_code(),
        }
    }
}
