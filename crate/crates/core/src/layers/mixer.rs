//! Gated mixer MLPs and the token/channel mixer block.

use super::params::{MixerBlockParams, MlpParams, SguParams};
use super::sgu::{sgu_backward, sgu_forward_cached, SguCache};
use crate::error::Result;
use crate::tensor::ops::{
    gelu, gelu_backward, layer_norm_backward, layer_norm_forward, matmul, matmul_backward,
    transpose, LayerNormCache,
};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct GatedMlpCache<T> {
    ln: LayerNormCache<T>,
    normed: Tensor<T>,
    sgu: Option<SguCache<T>>,
    pre_act: Tensor<T>,
    act: Tensor<T>,
}

/// `v + GELU(S(LN(v)·W_in))·W_out`, where `S` is the spatial gate if the
/// params carry one and the identity otherwise.
pub fn gated_mlp<T: Scalar>(v: &Tensor<T>, p: &MlpParams<T>, eps: T) -> Result<Tensor<T>> {
    gated_mlp_cached(v, p, eps).map(|(y, _)| y)
}

pub fn gated_mlp_cached<T: Scalar>(
    v: &Tensor<T>,
    p: &MlpParams<T>,
    eps: T,
) -> Result<(Tensor<T>, GatedMlpCache<T>)> {
    let (normed, ln) = layer_norm_forward(v, &p.ln_gain, &p.ln_bias, eps)?;
    let hidden = matmul(&normed, &p.w_in)?;
    let (pre_act, sgu) = match &p.sgu {
        Some(s) => {
            let (y, c) = sgu_forward_cached(&hidden, s)?;
            (y, Some(c))
        }
        None => (hidden, None),
    };
    let act = gelu(&pre_act)?;
    let mut out = matmul(&act, &p.w_out)?;
    out.add_assign(v)?;
    Ok((
        out,
        GatedMlpCache {
            ln,
            normed,
            sgu,
            pre_act,
            act,
        },
    ))
}

/// Parameter cotangents of one mixer MLP, same layout as [`MlpParams`].
pub type MlpGrad<T> = MlpParams<T>;

/// Returns the input cotangent and the parameter gradient.
pub fn gated_mlp_backward<T: Scalar>(
    cache: &GatedMlpCache<T>,
    p: &MlpParams<T>,
    g: &Tensor<T>,
) -> Result<(Tensor<T>, MlpGrad<T>)> {
    let (dact, dw_out) = matmul_backward(&cache.act, &p.w_out, g)?;
    let dpre = gelu_backward(&cache.pre_act, &dact)?;
    let (dhidden, dsgu) = match (&cache.sgu, &p.sgu) {
        (Some(c), Some(s)) => {
            let (dd, dw, db) = sgu_backward(c, s, &dpre)?;
            (
                dd,
                Some(SguParams {
                    w_spatial: dw,
                    b_spatial: db,
                }),
            )
        }
        _ => (dpre, None),
    };
    let (dnormed, dw_in) = matmul_backward(&cache.normed, &p.w_in, &dhidden)?;
    let (mut dv, dgain, dbias) = layer_norm_backward(&cache.ln, &p.ln_gain, &dnormed)?;
    dv.add_assign(g)?;
    Ok((
        dv,
        MlpParams {
            ln_gain: dgain,
            ln_bias: dbias,
            w_in: dw_in,
            w_out: dw_out,
            sgu: dsgu,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct MixerBlockCache<T> {
    token: GatedMlpCache<T>,
    channel: GatedMlpCache<T>,
}

/// Token mixing across the `E` axis (on the transpose), then channel mixing
/// across the `C` axis.
pub fn mixer_block_forward<T: Scalar>(
    m: &Tensor<T>,
    p: &MixerBlockParams<T>,
    eps: T,
) -> Result<Tensor<T>> {
    mixer_block_forward_cached(m, p, eps).map(|(y, _)| y)
}

pub fn mixer_block_forward_cached<T: Scalar>(
    m: &Tensor<T>,
    p: &MixerBlockParams<T>,
    eps: T,
) -> Result<(Tensor<T>, MixerBlockCache<T>)> {
    let (ut, token) = gated_mlp_cached(&transpose(m)?, &p.token_mlp, eps)?;
    let u = transpose(&ut)?;
    let (y, channel) = gated_mlp_cached(&u, &p.channel_mlp, eps)?;
    Ok((y, MixerBlockCache { token, channel }))
}

pub fn mixer_block_backward<T: Scalar>(
    cache: &MixerBlockCache<T>,
    p: &MixerBlockParams<T>,
    g: &Tensor<T>,
) -> Result<(Tensor<T>, MixerBlockParams<T>)> {
    let (du, channel_mlp) = gated_mlp_backward(&cache.channel, &p.channel_mlp, g)?;
    let (dmt, token_mlp) = gated_mlp_backward(&cache.token, &p.token_mlp, &transpose(&du)?)?;
    Ok((
        transpose(&dmt)?,
        MixerBlockParams {
            token_mlp,
            channel_mlp,
        },
    ))
}
