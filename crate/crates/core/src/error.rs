use alloc::string::String;
use core::fmt;

/// Errors produced by the core engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor shapes do not line up for an operation.
    Shape {
        op: &'static str,
        expected: String,
        actual: String,
    },
    /// An operation was called out of order (e.g. backward before forward).
    State(String),
    /// An argument is outside the operation's domain.
    InvalidArgument(String),
    /// A matrix that must be inverted is singular.
    Singular,
    /// Checkpoint bytes do not start with the expected magic.
    BadMagic([u8; 4]),
    /// Checkpoint version is not supported.
    VersionMismatch { expected: u32, found: u32 },
    /// Checkpoint is truncated or otherwise unreadable.
    CorruptCheckpoint(String),
    /// Checkpoint tensor names differ from the network's parameters.
    NameMismatch { expected: String, found: String },
    /// A checkpoint tensor has the wrong shape for the network.
    ParamShapeMismatch {
        name: String,
        expected: [usize; 4],
        found: [usize; 4],
    },
    /// A loss or parameter became NaN or infinite.
    NonFinite { iteration: usize, what: String },
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl fmt::Debug, actual: impl fmt::Debug) -> Self {
        Error::Shape {
            op,
            expected: alloc::format!("{expected:?}"),
            actual: alloc::format!("{actual:?}"),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, expected, actual } => {
                write!(f, "{op}: shape mismatch, expected {expected}, got {actual}")
            }
            Error::State(msg) => write!(f, "invalid state: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Singular => write!(f, "matrix is singular"),
            Error::BadMagic(m) => write!(f, "corrupt checkpoint: bad magic {m:?}"),
            Error::VersionMismatch { expected, found } => {
                write!(f, "checkpoint version {found} not supported (expected {expected})")
            }
            Error::CorruptCheckpoint(msg) => write!(f, "corrupt checkpoint: {msg}"),
            Error::NameMismatch { expected, found } => {
                write!(f, "checkpoint tensor name mismatch: expected `{expected}`, found `{found}`")
            }
            Error::ParamShapeMismatch { name, expected, found } => write!(
                f,
                "checkpoint shape mismatch at `{name}`: expected {expected:?}, found {found:?}"
            ),
            Error::NonFinite { iteration, what } => {
                write!(f, "non-finite {what} at iteration {iteration}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
