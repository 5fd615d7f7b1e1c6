//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent run configuration.
    #[error("config: {0}")]
    Config(String),

    /// Schema file problems: missing columns, bad encoding declarations.
    #[error("schema: {0}")]
    Schema(String),

    /// A specific CSV row failed to parse or encode.
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },

    /// A value could not be encoded as a binary label/sensitive attribute.
    #[error("encoding: {0}")]
    Encoding(String),

    /// Structural dataset problems (empty, inconsistent widths, duplicate ids).
    #[error("data: {0}")]
    Data(String),

    /// Split construction failed (too small, or a part lost a group).
    #[error("split: {0}")]
    Split(String),

    /// Group statistics undefined (a sensitive group is absent).
    #[error("stats: {0}")]
    Stats(String),

    /// Vector/matrix dimension mismatch.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Optimizer could not make progress (singular Hessian, divergence).
    #[error("optimization: {0}")]
    Optimization(String),

    /// Non-finite values or other numeric breakdown.
    #[error("numeric: {0}")]
    Numeric(String),

    /// Partitioning failures (component count infeasible, bad column).
    #[error("partition: {0}")]
    Partition(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schema(_) => 2,
            Error::Row { .. }
            | Error::Encoding(_)
            | Error::Data(_)
            | Error::Split(_)
            | Error::Stats(_)
            | Error::Partition(_)
            | Error::Io(_) => 3,
            Error::Dimension { .. } | Error::Optimization(_) | Error::Numeric(_) => 4,
        }
    }
}
