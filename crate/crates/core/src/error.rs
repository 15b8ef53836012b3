use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("table has missing cells in column `{0}`")]
    MissingCells(String),

    #[error("column `{column}` has {cardinality} categories, one-hot cap is {cap}")]
    Cardinality {
        column: String,
        cardinality: usize,
        cap: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in input")]
    NonFinite,

    #[error("matrix is not symmetric (|a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("labels must be binary 0/1")]
    NonBinaryLabels,

    #[error("only one class present; {0} is undefined")]
    SingleClass(&'static str),

    #[error("l1 penalty is only supported by the gd solver")]
    UnsupportedSolver,

    #[error("clustering chose k = {0}; binary labels need k = 2")]
    ClusterCount(usize),

    #[error("every grid cell is invalid")]
    EmptyGrid,

    #[error("bundle version `{found}` is not supported (expected `{expected}`)")]
    BundleVersion { found: String, expected: String },

    #[error("corrupt bundle: {0}")]
    CorruptBundle(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::UnsupportedSolver | Error::EmptyGrid => {
                ErrorClass::Usage
            }
            Error::NonFinite | Error::NotSymmetric(_) | Error::NoConvergence(_) => ErrorClass::Numerical,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}

/// Wraps an error with the name of the pipeline stage that produced it.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}
