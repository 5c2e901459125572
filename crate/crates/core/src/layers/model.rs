//! Full model assembly for the four variants.

use super::config::ModelConfig;
use super::dwc::{dwc_block_backward, dwc_block_forward};
use super::head::{head_backward, head_logits};
use super::mixer::{mixer_block_backward, mixer_block_forward_cached, MixerBlockCache};
use super::params::{DwcBranch, ModelParams};
use super::tokenize::{segments, tokenize_backward};
use crate::error::{Error, Result};
use crate::tensor::ops::{add_row_bias, matmul, softmax};
use crate::tensor::{Scalar, Tensor};

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    patch: Tensor<T>,
    segments: Tensor<T>,
    blocks: Vec<MixerBlockCache<T>>,
    /// Token matrix straight out of the embedding.
    pub embedded: Tensor<T>,
    /// Token matrix after the last mixer block.
    pub tokens: Tensor<T>,
    pub logits: Tensor<T>,
    pub probs: Tensor<T>,
}

fn check_structure<T: Scalar>(
    patch: &Tensor<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
) -> Result<()> {
    let w = config.patch_window;
    if patch.shape() != [w, w, config.bands] {
        return Err(Error::Dimension(format!(
            "patch {:?} does not match [{w}, {w}, {}]",
            patch.shape(),
            config.bands
        )));
    }
    let dwc_ok = params.dwc.is_empty() != config.variant.uses_dwc();
    let sgu_ok = params.blocks.len() == config.num_blocks
        && params.blocks.iter().all(|b| {
            b.token_mlp.sgu.is_some() == config.token_sgu()
                && b.channel_mlp.sgu.is_some() == config.channel_sgu()
        });
    if !dwc_ok || !sgu_ok {
        return Err(Error::Config(format!(
            "parameters do not match variant {}",
            config.variant
        )));
    }
    Ok(())
}

/// Class probabilities for one `window × window × bands` patch.
pub fn model_forward<T: Scalar>(
    patch: &Tensor<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
) -> Result<Tensor<T>> {
    forward_cached(patch, params, config).map(|c| c.probs)
}

pub fn forward_cached<T: Scalar>(
    patch: &Tensor<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
) -> Result<ForwardCache<T>> {
    check_structure(patch, params, config)?;
    let eps = T::from_f64_lossy(config.ln_eps);
    let features = if config.variant.uses_dwc() {
        dwc_block_forward(patch, &params.dwc)?
    } else {
        patch.clone()
    };
    let segs = segments(features.data(), config.token_segment)?;
    let embedded = add_row_bias(&matmul(&segs, &params.embed_w)?, &params.embed_b)?;
    let mut tokens = embedded.clone();
    let mut caches = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let (next, cache) = mixer_block_forward_cached(&tokens, block, eps)?;
        tokens = next;
        caches.push(cache);
    }
    let logits = head_logits(&tokens, &params.head_w, &params.head_b)?;
    let probs = softmax(&logits)?;
    Ok(ForwardCache {
        patch: patch.clone(),
        segments: segs,
        blocks: caches,
        embedded,
        tokens,
        logits,
        probs,
    })
}

/// Parameter gradients given the cotangent of the logits.
pub fn model_backward<T: Scalar>(
    cache: &ForwardCache<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
    dlogits: &Tensor<T>,
) -> Result<ModelParams<T>> {
    let (mut dtokens, head_w, head_b) = head_backward(&cache.tokens, &params.head_w, dlogits)?;
    let mut blocks = Vec::with_capacity(params.blocks.len());
    for (block, bc) in params.blocks.iter().zip(&cache.blocks).rev() {
        let (d, g) = mixer_block_backward(bc, block, &dtokens)?;
        dtokens = d;
        blocks.push(g);
    }
    blocks.reverse();
    let (dflat, embed_w, embed_b) = tokenize_backward(
        &cache.segments,
        &params.embed_w,
        &dtokens,
        config.input_len(),
    )?;
    let dwc = if config.variant.uses_dwc() {
        let dfeat = Tensor::new(cache.patch.shape(), dflat)?;
        let (_, grads) = dwc_block_backward(&cache.patch, &params.dwc, &dfeat)?;
        params
            .dwc
            .iter()
            .zip(grads)
            .map(|(b, g)| DwcBranch {
                kernel_size: b.kernel_size,
                kernels: g.kernels,
                bias: g.bias,
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(ModelParams {
        dwc,
        embed_w,
        embed_b,
        blocks,
        head_w,
        head_b,
    })
}

/// Index of the largest probability (0-based class).
pub fn argmax<T: Scalar>(probs: &Tensor<T>) -> usize {
    probs
        .data()
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}
