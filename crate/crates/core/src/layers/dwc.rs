//! Parallel depthwise convolutions summed into one feature map.

use super::params::DwcBranch;
use crate::error::{Error, Result};
use crate::tensor::ops::{depthwise_conv2d, depthwise_conv2d_backward};
use crate::tensor::{Scalar, Tensor};

/// `Σ_k DWConv_k(x)` over all branches; output shape equals input shape.
pub fn dwc_block_forward<T: Scalar>(x: &Tensor<T>, branches: &[DwcBranch<T>]) -> Result<Tensor<T>> {
    let mut acc: Option<Tensor<T>> = None;
    for b in branches {
        let y = depthwise_conv2d(x, &b.kernels, &b.bias)?;
        match &mut acc {
            Some(a) => a.add_assign(&y)?,
            None => acc = Some(y),
        }
    }
    acc.ok_or_else(|| Error::Config("convolution block has no branches".into()))
}

/// Per-branch parameter cotangents.
#[derive(Debug, Clone)]
pub struct DwcBranchGrad<T> {
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Returns the input cotangent and one gradient per branch.
pub fn dwc_block_backward<T: Scalar>(
    x: &Tensor<T>,
    branches: &[DwcBranch<T>],
    g: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<DwcBranchGrad<T>>)> {
    let mut dx = Tensor::zeros(x.shape());
    let mut grads = Vec::with_capacity(branches.len());
    for b in branches {
        let (bx, bk, bb) = depthwise_conv2d_backward(x, &b.kernels, g)?;
        dx.add_assign(&bx)?;
        grads.push(DwcBranchGrad {
            kernels: bk,
            bias: bb,
        });
    }
    Ok((dx, grads))
}
