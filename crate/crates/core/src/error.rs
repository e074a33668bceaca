//! Error taxonomy shared by the library and the command line front end.
//!
//! Variants map one-to-one onto process exit codes so the binary can report
//! *what kind* of thing went wrong without string matching: configuration
//! problems (2), data problems (3), numerical failures (4), and model file
//! problems (5).

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or arguments: bad fractions, horizons, schedules.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid or unusable input data: malformed CSV, empty datasets,
    /// trials too short to window.
    #[error("data error: {0}")]
    Data(String),

    /// A computation produced non-finite values or failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The model binary could not be read back.
    #[error(transparent)]
    ModelFile(#[from] ModelFileError),

    /// Filesystem trouble, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class. 0 is reserved for success.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) => 3,
            Error::Numerical(_) => 4,
            Error::ModelFile(_) => 5,
            Error::Io { .. } => 3,
        }
    }
}

/// Failure modes of the model binary format. Each is distinguishable so a
/// caller can tell a wrong file from a damaged one.
#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a model file (bad magic)")]
    NotAModelFile,

    #[error("unsupported model file version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("model file truncated: {0}")]
    Truncated(String),

    #[error("model file checksum mismatch (file damaged or edited)")]
    ChecksumMismatch,

    #[error("model file dimensions inconsistent: {0}")]
    DimensionMismatch(String),

    #[error("model file field invalid: {0}")]
    InvalidField(String),

    #[error("model file i/o on {path}: {message}")]
    Io { path: PathBuf, message: String },
}
