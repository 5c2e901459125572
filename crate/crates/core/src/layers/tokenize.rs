//! Flattened-patch tokenizer: fixed-length segments through a shared embedding.

use crate::error::{Error, Result};
use crate::tensor::ops::{add_row_bias, column_sums, matmul, matmul_nt, matmul_tn};
use crate::tensor::{Scalar, Tensor};

/// Zero-pads `x` to a multiple of `segment` and reshapes it to
/// `ceil(len/segment) × segment`.
pub fn segments<T: Scalar>(x: &[T], segment: usize) -> Result<Tensor<T>> {
    if segment == 0 || x.is_empty() {
        return Err(Error::Dimension("tokenize: empty input or segment".into()));
    }
    let count = x.len().div_ceil(segment);
    let mut data = x.to_vec();
    data.resize(count * segment, T::zero());
    Tensor::new(&[count, segment], data)
}

/// Maps a flattened patch to `E × C` tokens; row `e` embeds segment `e`.
pub fn tokenize<T: Scalar>(x_flat: &[T], w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (p, _) = w.dims2()?;
    add_row_bias(&matmul(&segments(x_flat, p)?, w)?, b)
}

/// Returns `(dx_flat, dw, db)`; `dx_flat` drops the padded tail.
pub fn tokenize_backward<T: Scalar>(
    segs: &Tensor<T>,
    w: &Tensor<T>,
    g: &Tensor<T>,
    input_len: usize,
) -> Result<(Vec<T>, Tensor<T>, Tensor<T>)> {
    let dw = matmul_tn(segs, g)?;
    let db = column_sums(g)?;
    let mut dx = matmul_nt(g, w)?.into_data();
    dx.truncate(input_len);
    Ok((dx, dw, db))
}
