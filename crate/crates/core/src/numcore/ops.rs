use crate::error::{Error, Result};

use super::tensor::Vector;

/// Largest argument passed to `exp` before it would overflow an f64.
const EXP_CLAMP: f64 = 709.0;

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    let x = x.clamp(-EXP_CLAMP, EXP_CLAMP);
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh_scalar(x: f64) -> f64 {
    x.clamp(-EXP_CLAMP, EXP_CLAMP).tanh()
}

/// Elementwise logistic function.
pub fn sigmoid(x: &[f64]) -> Vector {
    Vector::from_raw(x.iter().map(|&v| sigmoid_scalar(v)).collect())
}

/// Elementwise hyperbolic tangent.
pub fn tanh_act(x: &[f64]) -> Vector {
    Vector::from_raw(x.iter().map(|&v| tanh_scalar(v)).collect())
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &[f64]) -> Vector {
    Vector::from_raw(x.iter().map(|&v| v.max(0.0)).collect())
}

/// Numerically stable softmax (max-subtracted). Panics on empty input.
pub fn softmax(s: &[f64]) -> Vector {
    assert!(!s.is_empty(), "softmax of an empty vector");
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = s.iter().map(|&v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Vector::from_raw(exps.into_iter().map(|e| e / z).collect())
}

/// Backward of `p = softmax(s)`: returns `∂L/∂s` given `∂L/∂p`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let inner: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    p.iter().zip(dp).map(|(pi, dpi)| pi * (dpi - inner)).collect()
}

/// Cross-entropy of a probability vector against class `y`.
///
/// Returns `(−ln p[y], p − onehot(y))`; the second element is the gradient with
/// respect to the logits that produced `p` through a softmax.
pub fn cross_entropy(p: &[f64], y: usize) -> Result<(f64, Vector)> {
    if y >= p.len() {
        return Err(Error::Index { what: "class label", index: y, len: p.len() });
    }
    let loss = -p[y].max(f64::MIN_POSITIVE).ln();
    let mut grad = p.to_vec();
    grad[y] -= 1.0;
    Ok((loss, Vector::from_raw(grad)))
}
