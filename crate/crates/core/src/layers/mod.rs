//! The SGU-MLP architecture.
//!
//! A `window × window × bands` patch optionally passes through the
//! depthwise-convolution block, is flattened and cut into fixed-length
//! segments that a shared embedding maps to tokens, goes through a stack of
//! mixer blocks (each a token-mixing and a channel-mixing MLP, optionally
//! gated), and ends in a mean-pooled softmax classifier.

mod config;
pub mod dwc;
pub mod head;
pub mod mixer;
mod model;
mod params;
pub mod sgu;
pub mod tokenize;

pub use config::{ModelConfig, SguPlacement, Variant};
pub use model::{argmax, forward_cached, model_backward, model_forward, ForwardCache};
pub use params::{
    init_params, param_count, random_like, shape_manifest, DwcBranch, MixerBlockParams, MlpParams,
    ModelParams, SguParams, SGU_INIT_BOUND,
};
