//! 3D encoder-decoder segmentation network with optional attention in the decoder.

pub mod checkpoint;
pub mod config;
mod model;
mod params;

pub use checkpoint::Checkpoint;
pub use config::{default_strides, norm_groups, NetworkConfig, Preset, DEFAULT_INPUT_WINDOWS};
pub use model::Network;
pub use params::{parameter_manifest, ParamStore};
