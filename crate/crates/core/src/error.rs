use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("numerical consistency error: {0}")]
    NumericalConsistency(String),

    #[error("solver diverged at iteration {iteration}: {context}")]
    Divergence { iteration: usize, context: String },

    #[error("history state is uninitialized (t = 0)")]
    UninitializedHistory,

    #[error("filter variance is undefined for single-element filters")]
    UndefinedVariance,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite input rejected: {0}")]
    NonFinite(String),

    #[error("sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: bad magic, expected {expected:?}", .path.display())]
    BadMagic { path: PathBuf, expected: String },

    #[error("{}: checksum mismatch (stored {stored:#010x}, computed {computed:#010x})", .path.display())]
    Checksum {
        path: PathBuf,
        stored: u32,
        computed: u32,
    },

    #[error("{}: truncated file ({detail})", .path.display())]
    Truncated { path: PathBuf, detail: String },

    #[error("{}: unsupported format: {detail}", .path.display())]
    Format { path: PathBuf, detail: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", .path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_sample(self, index: usize) -> Self {
        Error::AtSample {
            index,
            source: Box::new(self),
        }
    }

    /// Strips `AtSample` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtSample { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::Divergence { .. } | Error::NumericalConsistency(_)
        )
    }
}
