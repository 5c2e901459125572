//! Classifier head: mean over tokens, dense layer, softmax.

use crate::error::{Error, Result};
use crate::tensor::ops::{matmul_backward, softmax};
use crate::tensor::{Scalar, Tensor};

/// Mean of the rows of `tokens[E×C]` as a `1×C` matrix.
pub fn pool_tokens<T: Scalar>(tokens: &Tensor<T>) -> Result<Tensor<T>> {
    let (e, c) = tokens.dims2()?;
    let mut pooled = vec![T::zero(); c];
    for row in tokens.data().chunks_exact(c) {
        for (p, &v) in pooled.iter_mut().zip(row) {
            *p = *p + v;
        }
    }
    let n = T::from_usize(e).unwrap();
    pooled.iter_mut().for_each(|p| *p = *p / n);
    Tensor::new(&[1, c], pooled)
}

/// Class logits `[num_classes]` for one token matrix.
pub fn head_logits<T: Scalar>(
    tokens: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (_, c) = tokens.dims2()?;
    let (wc, k) = w.dims2()?;
    if wc != c || b.shape() != [k] {
        return Err(Error::Dimension(format!(
            "head {:?}/{:?} does not match tokens {:?}",
            w.shape(),
            b.shape(),
            tokens.shape()
        )));
    }
    let pooled = pool_tokens(tokens)?;
    let logits = crate::tensor::ops::matmul(&pooled, w)?;
    let mut out = logits.reshape(&[k])?;
    out.add_assign(b)?;
    Ok(out)
}

/// Class probabilities `[num_classes]`.
pub fn head_forward<T: Scalar>(
    tokens: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Tensor<T>> {
    softmax(&head_logits(tokens, w, b)?)
}

/// Given the logit cotangent, returns `(dtokens, dw, db)`.
pub fn head_backward<T: Scalar>(
    tokens: &Tensor<T>,
    w: &Tensor<T>,
    dlogits: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (e, c) = tokens.dims2()?;
    let k = dlogits.len();
    let pooled = pool_tokens(tokens)?;
    let g = dlogits.clone().reshape(&[1, k])?;
    let (dpooled, dw) = matmul_backward(&pooled, w, &g)?;
    let n = T::from_usize(e).unwrap();
    let dtok = Tensor::from_fn(&[e, c], |i| dpooled.data()[i % c] / n);
    Ok((dtok, dw, dlogits.clone().reshape(&[k])?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_tokens_pool_to_themselves() {
        let t = Tensor::from_fn(&[5, 3], |i| [0.5, -1.0, 2.0][i % 3]);
        assert_eq!(pool_tokens(&t).unwrap().data(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn zero_head_is_uniform() {
        let t = Tensor::from_fn(&[5, 3], |i| i as f64);
        let p = head_forward(&t, &Tensor::zeros(&[3, 4]), &Tensor::zeros(&[4])).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }
}
