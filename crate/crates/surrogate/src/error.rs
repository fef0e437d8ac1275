use std::io;
use std::path::PathBuf;

use surrogate_core::train::TrainError;

/// Problems decoding or encoding an image file.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ImageError {
    #[error("unsupported format magic `{0}` (expected P5, P6, Pf or PF)")]
    BadMagic(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported maxval {0} (only 255 is supported)")]
    UnsupportedMaxval(u32),
    #[error("truncated pixel data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after pixel data")]
    TrailingBytes(usize),
    #[error("cannot store a tensor of shape {0:?} as an image")]
    Shape([usize; 4]),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: ImageError },
    #[error("{}: {source}", path.display())]
    Checkpoint {
        path: PathBuf,
        source: surrogate_core::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] surrogate_core::Error),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("gradient check failed for: {0}")]
    GradcheckFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Train(TrainError::Aborted(_)) | Error::GradcheckFailed(_) => 3,
            Error::Core(surrogate_core::Error::NonFinite { .. }) => 3,
            _ => 2,
        }
    }
}
