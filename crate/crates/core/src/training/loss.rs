use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean of `−ln p[i, label_i]` over the rows of `probs[batch × C]`;
/// labels are 0-based.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let (n, c) = probs.dims2()?;
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {n} probability rows",
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (row, &l) in probs.data().chunks_exact(c).zip(labels) {
        if l >= c {
            return Err(Error::Data(format!("label {l} outside 0..{c}")));
        }
        total -= row[l].as_f64().max(PROB_FLOOR).ln();
    }
    Ok(total / n as f64)
}

/// Logit cotangent of softmax followed by cross-entropy for one sample:
/// `probs − onehot(label)`, scaled by `weight`.
pub fn softmax_cross_entropy_grad<T: Scalar>(
    probs: &Tensor<T>,
    label: usize,
    weight: T,
) -> Result<Tensor<T>> {
    if label >= probs.len() {
        return Err(Error::Data(format!(
            "label {label} outside 0..{}",
            probs.len()
        )));
    }
    let mut g = probs.clone();
    g.data_mut()[label] = g.data()[label] - T::one();
    g.data_mut().iter_mut().for_each(|v| *v = *v * weight);
    Ok(g)
}
