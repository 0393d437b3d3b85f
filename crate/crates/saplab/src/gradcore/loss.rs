//! Numerically stable softmax and cross-entropy.

use crate::error::{Error, Result};
use crate::gradcore::tensor::Tensor;

/// Max-subtracted softmax; finite for any finite logits.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    assert!(!logits.is_empty(), "softmax of an empty logit vector");
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// First index attaining the maximum (deterministic tie-break).
pub fn argmax_lowest(values: &[f64]) -> usize {
    assert!(!values.is_empty(), "argmax of an empty vector");
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy of softmax(logits) against `label`, evaluated through
/// log-sum-exp: `(loss, d loss / d logits)`.
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let z = logits.data();
    if label >= z.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: z.len(),
        });
    }
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut grad: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let total: f64 = grad.iter().sum();
    let loss = (m + total.ln()) - z[label];
    for g in &mut grad {
        *g /= total;
    }
    grad[label] -= 1.0;
    Ok((loss, Tensor::vector(grad)))
}
