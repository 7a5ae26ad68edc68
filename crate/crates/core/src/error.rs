use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine, grouped by how a caller should react.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes are incompatible for the requested operation.
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// Model or experiment configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// The requested architecture variant cannot run on the given modalities.
    #[error("variant error: {0}")]
    Variant(String),

    /// An API was called outside its contract (bad argument, wrong input kind).
    #[error("usage error: {0}")]
    Usage(String),

    /// Input files do not follow the expected layout.
    #[error("schema error in {source_name}: {detail}")]
    Schema { source_name: String, detail: String },

    /// Input data is well-formed but unusable (empty cohort, degenerate site, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A computation produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn schema(source_name: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Schema { source_name: source_name.into(), detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for this error: 2 usage/config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Variant(_) | Error::Usage(_) | Error::Shape { .. } => 2,
            Error::Schema { .. } | Error::Data(_) | Error::Io { .. } | Error::Serde(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
