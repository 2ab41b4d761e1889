use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm is at or below the zero threshold")]
    ZeroVector,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("class {class} out of range for {classes} classes")]
    BadClass { class: usize, classes: usize },

    #[error("client {client} out of range for {clients} clients")]
    BadClient { client: usize, clients: usize },

    #[error("invalid entropy {0}")]
    InvalidEntropy(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("memory is empty")]
    EmptyMemory,

    #[error("argument outside the domain: {0}")]
    Domain(String),

    /// A world violates one of the ball-mixture assumptions.
    #[error("{assumption} assumption violated: {detail}")]
    Assumption {
        assumption: &'static str,
        detail: String,
    },

    #[error("bad magic in {path}: {detail}")]
    BadMagic { path: PathBuf, detail: String },

    #[error("truncated file {path}: expected {expected} bytes, found {found}")]
    TruncatedFile {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("checksum mismatch in {path}: manifest {expected:08x}, file {found:08x}")]
    ChecksumMismatch {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("non-finite embedding in {path} at row {row}")]
    NonFiniteRow { path: PathBuf, row: usize },

    #[error("zero-norm embedding in {path} at row {row}")]
    ZeroRow { path: PathBuf, row: usize },

    #[error("label {label} at row {row} out of range for {classes} classes")]
    LabelOutOfRange {
        row: usize,
        label: u32,
        classes: usize,
    },

    #[error("domain {domain} has {samples} samples, too few for {clients} clients")]
    EmptyDomain {
        domain: u32,
        samples: usize,
        clients: usize,
    },

    #[error("malformed manifest {path}: {detail}")]
    Manifest { path: PathBuf, detail: String },

    #[error("malformed wire record: {0}")]
    Wire(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("client {client} failed at sample {sample}")]
    Step {
        client: usize,
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs (configs, files, parameters)
    /// rather than failures during a run.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Step { .. } | Error::Csv(_))
    }
}
