use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward called without a forward cache for {0}")]
    MissingCache(&'static str),

    #[error("invalid network spec: {0}")]
    Spec(String),

    #[error("model file: {0}")]
    ModelFile(#[from] ModelFileError),

    #[error("degenerate image: {0}")]
    DegenerateImage(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }
}

/// Failures while decoding a serialized model.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelFileError {
    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("file truncated while reading {0}")]
    Truncated(&'static str),

    #[error("shape table inconsistent with payload: {0}")]
    ShapeMismatch(String),

    #[error("embedded network spec is invalid: {0}")]
    BadSpec(String),

    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
}

impl ModelFileError {
    /// Stable numeric code for each failure kind.
    pub fn code(&self) -> u8 {
        match self {
            ModelFileError::BadMagic(_) => 1,
            ModelFileError::UnsupportedVersion(_) => 2,
            ModelFileError::Truncated(_) => 3,
            ModelFileError::ShapeMismatch(_) => 4,
            ModelFileError::BadSpec(_) => 5,
            ModelFileError::TrailingBytes(_) => 6,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
