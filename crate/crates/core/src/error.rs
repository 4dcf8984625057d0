use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("coordinate ({x}, {y}) outside {width}x{height} raster")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("bad magic in {path}: {detail}")]
    BadMagic { path: PathBuf, detail: String },

    #[error("truncated file {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("degenerate affine fit (condition number {0:e})")]
    DegenerateFit(f64),

    #[error("interpolation impossible: {0}")]
    InterpolationImpossible(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors that come from the file system or file decoding.
    pub fn is_io(&self) -> bool {
        match self {
            Error::MissingFile(_)
            | Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::Format(_)
            | Error::Io(_)
            | Error::Image(_) => true,
            Error::Stage { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

/// Maps an I/O open error to [`Error::MissingFile`] when the file does not exist.
pub(crate) fn open_error(path: &std::path::Path, err: std::io::Error) -> Error {
    if err.kind() == std::io::ErrorKind::NotFound {
        Error::MissingFile(path.to_path_buf())
    } else {
        Error::Io(err)
    }
}
