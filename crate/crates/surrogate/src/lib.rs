//! File formats, dataset plumbing and the command line around
//! [`surrogate_core`]: pixmap and float-map images, dataset manifests, the
//! JSON run configuration, metrics and evaluation CSVs, checkpoint files and
//! the `surrogate` binary's commands.

pub mod config;
pub mod error;
pub mod image;
pub mod manifest;
pub mod pipeline;
pub mod report;

pub use error::{Error, ImageError, Result};
