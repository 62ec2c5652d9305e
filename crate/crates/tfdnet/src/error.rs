use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an operation's arguments was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Tensor shapes are incompatible for the requested operation.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A configuration field failed validation.
    #[error("invalid config: {0}")]
    Config(String),

    /// Numeric values became NaN or infinite where finite values are required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A cell in an input file could not be parsed.
    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        /// 1-based file row; the header is row 1.
        row: usize,
        /// 1-based column index.
        column: usize,
        message: String,
    },

    /// A dataset or split contains no usable rows.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// A checkpoint file does not start with the expected magic header.
    #[error("bad magic in checkpoint {path}: expected {expected:?}, found {found:?}")]
    BadMagic {
        path: PathBuf,
        expected: String,
        found: String,
    },

    /// A checkpoint's stored architecture does not match the requested one.
    #[error("architecture mismatch: expected {expected}, found {found}")]
    ArchitectureMismatch { expected: String, found: String },

    /// Checkpoint contents are structurally invalid.
    #[error("corrupt checkpoint {path}: {message}")]
    CorruptCheckpoint { path: PathBuf, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
