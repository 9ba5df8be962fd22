use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration (geometry, solver settings, labels).
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Mismatched or insufficient array shapes / lengths.
    #[error("shape error: {0}")]
    Shape(String),

    /// A derived feature could not be computed from the given data.
    #[error("feature unavailable: {0}")]
    FeatureUnavailable(String),

    #[error("under-determined fit: {0}")]
    UnderDetermined(String),

    #[error("acoustic solver became unstable at step {step}: max |p| = {max_pressure:e} Pa ({detail})")]
    Instability {
        step: usize,
        max_pressure: f64,
        detail: String,
    },

    /// Malformed input text (config files, CSV traces).
    #[error("parse error{}: {message}", location.map(|(l, c)| format!(" at line {l}, column {c}")).unwrap_or_default())]
    Parse {
        message: String,
        location: Option<(usize, usize)>,
    },

    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("unit violation at `{path}`: {message}")]
    Unit { path: String, message: String },

    #[error("i/o error on {path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn unavailable(msg: impl Into<String>) -> Self {
        Error::FeatureUnavailable(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io { path: path.into(), cause }
    }
}
