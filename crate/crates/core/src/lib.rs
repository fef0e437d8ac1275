//! Two-stage restoration training with surrogate ground truth.
//!
//! A network `G0` is first trained on synthetically degraded pairs. It then
//! restores real degraded inputs, and those restorations serve as surrogate
//! targets for retraining `G` on the real inputs, with an adversarial term
//! pulling outputs toward a pool of unpaired clean images.
//!
//! The crate is `no_std` (with `alloc`) and purely computational: tensors and
//! layers with analytic backward passes, degradation operators (bicubic,
//! a pseudo-real capture model, an LCD/camera moiré simulator), network
//! builders, checkpoint encoding and the training loops. File formats and
//! the command line live in the `surrogate` crate.

#![no_std]

extern crate alloc;

pub mod checkpoint;
pub mod degrade;
pub mod error;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod models;
pub mod network;
pub mod ops;
pub mod patches;
pub mod rng;
pub mod scenes;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use network::{Network, NetworkSpec};
pub use tensor::Tensor;
