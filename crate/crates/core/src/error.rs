use std::path::PathBuf;

use thiserror::Error;

/// Errors produced while reading inputs, validating them, or advancing the simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context} line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("validation failed: {message}")]
    Validation { message: String, ids: Vec<usize> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("value `{name}` = {value} outside [{min}, {max}]")]
    OutOfRange {
        name: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("kinematics error: {0}")]
    Kinematics(String),

    #[error("element {element} inverted (det = {det:e})")]
    Inversion { element: usize, det: f64 },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("step {step} (t = {time:.4} yr): {source}")]
    Step {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn validation(message: impl Into<String>, ids: Vec<usize>) -> Self {
        Error::Validation {
            message: message.into(),
            ids,
        }
    }

    /// Strips any [`Error::Step`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
