//! Spatial gating unit.
//!
//! The input `D` (rows × f) is split along the channel axis into halves
//! `D1`, `D2`. The gate is a learned linear projection across rows,
//! `G = W·D2 + b` with `W` square over the row axis and `b` one value per
//! row, and the output is `D1 ⊙ G` with `f/2` channels.

use super::params::SguParams;
use crate::error::{Error, Result};
use crate::tensor::ops::{concat_columns, matmul, matmul_nt, matmul_tn, mul, split_columns};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct SguCache<T> {
    pub d1: Tensor<T>,
    pub d2: Tensor<T>,
    pub gate: Tensor<T>,
}

fn check<T: Scalar>(d: &Tensor<T>, p: &SguParams<T>) -> Result<(usize, usize)> {
    let (rows, f) = d.dims2()?;
    if f % 2 != 0 {
        return Err(Error::Config(format!(
            "spatial gate needs an even channel count, got {f}"
        )));
    }
    if p.w_spatial.shape() != [rows, rows] || p.b_spatial.shape() != [rows] {
        return Err(Error::Dimension(format!(
            "spatial gate params {:?}/{:?} do not match {rows} rows",
            p.w_spatial.shape(),
            p.b_spatial.shape()
        )));
    }
    Ok((rows, f))
}

pub fn sgu_forward<T: Scalar>(d: &Tensor<T>, p: &SguParams<T>) -> Result<Tensor<T>> {
    sgu_forward_cached(d, p).map(|(y, _)| y)
}

pub fn sgu_forward_cached<T: Scalar>(
    d: &Tensor<T>,
    p: &SguParams<T>,
) -> Result<(Tensor<T>, SguCache<T>)> {
    let (_, f) = check(d, p)?;
    let (d1, d2) = split_columns(d, f / 2)?;
    let mut gate = matmul(&p.w_spatial, &d2)?;
    let half = f / 2;
    for (row, &b) in gate
        .data_mut()
        .chunks_exact_mut(half)
        .zip(p.b_spatial.data())
    {
        row.iter_mut().for_each(|v| *v = *v + b);
    }
    let y = mul(&d1, &gate)?;
    Ok((y, SguCache { d1, d2, gate }))
}

/// Returns `(dD, dW, db)`.
pub fn sgu_backward<T: Scalar>(
    cache: &SguCache<T>,
    p: &SguParams<T>,
    g: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let dd1 = mul(g, &cache.gate)?;
    let dgate = mul(g, &cache.d1)?;
    let dw = matmul_nt(&dgate, &cache.d2)?;
    let half = cache.d1.shape()[1];
    let db: Vec<T> = dgate
        .data()
        .chunks_exact(half)
        .map(|r| r.iter().copied().sum())
        .collect();
    let dd2 = matmul_tn(&p.w_spatial, &dgate)?;
    let rows = cache.d1.shape()[0];
    Ok((concat_columns(&dd1, &dd2)?, dw, Tensor::new(&[rows], db)?))
}
