use std::path::PathBuf;

use thiserror::Error;

/// Errors shared across the numeric core and the image pipeline.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}{}", ctx_suffix(.context))]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
        context: String,
    },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("non-finite gradient for parameter '{name}'")]
    NonFiniteGradient { name: String },

    #[error("image too small: {width}x{height}, need at least {min} on each axis")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("checkpoint error for '{name}': {reason}")]
    Checkpoint { name: String, reason: String },

    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image decode/encode error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("config error: {0}")]
    Config(String),
}

fn ctx_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl CoreError {
    pub(crate) fn shape(expected: &[usize], got: &[usize], context: impl Into<String>) -> Self {
        CoreError::ShapeMismatch {
            expected: expected.to_vec(),
            got: got.to_vec(),
            context: context.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
