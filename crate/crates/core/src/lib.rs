//! Spatial-gated MLP-Mixer (SGU-MLP) for patch-based multimodal land-cover
//! classification, implemented on a small dense tensor core with hand-written
//! backward passes.
//!
//! Module map:
//! - [`tensor`]: dense tensor, forward ops and their vector-Jacobian products.
//! - [`layers`]: depthwise-convolution block, spatial gating unit, mixer blocks,
//!   tokenizer, classifier head and the four ablation variants.
//! - [`data`]: band stacks, label rasters, patch extraction, splits, synthetic scenes.
//! - [`training`]: loss, optimizers, training loop, gradient checking, checkpoints.
//! - [`metrics`]: confusion matrix, OA/AA/kappa/F1 and report rendering.
//! - [`cli`]: the `sgumlp` command-line workflows.

pub mod cli;
pub mod data;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};

pub use layers::{ModelConfig, ModelParams, Variant};
pub use tensor::{Scalar, Tensor};
