//! Orthogonal-axis ("viola") attention 3D U-Net engine.
//!
//! A small `f64` tensor library with reverse-mode gradients backs the
//! attention module, a configurable encoder-decoder network, the dice+focal
//! training recipe, sliding-window inference and spacing-aware
//! segmentation metrics.

pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod optim;
pub mod parallel;
pub mod tensor;
pub mod train;
pub mod unet;
pub mod viola;
pub mod volume;

pub use error::{Error, Result};
pub use tensor::Tensor;
