use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::rng::Rng;
use super::tensor::Matrix;

/// What a parameter is, which decides whether L2 applies to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Weight,
    Bias,
    Embedding,
    /// Layer-norm gains and offsets.
    Norm,
}

/// A named trainable tensor with its gradient and Adam moments.
///
/// Vectors are stored as single-column matrices so every parameter shares one
/// layout; `value.as_slice()` is the flat row-major payload either way.
#[derive(Clone, Debug)]
pub struct ParamTensor {
    pub name: String,
    pub kind: ParamKind,
    pub value: Matrix,
    pub grad: Matrix,
    pub m: Matrix,
    pub v: Matrix,
    pub step_count: u64,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, kind: ParamKind, value: Matrix) -> Self {
        let (r, c) = value.shape();
        Self {
            name: name.into(),
            kind,
            value,
            grad: Matrix::zeros(r, c),
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
            step_count: 0,
        }
    }

    pub fn zeros(name: impl Into<String>, kind: ParamKind, rows: usize, cols: usize) -> Self {
        Self::new(name, kind, Matrix::zeros(rows, cols))
    }

    /// Weight matrix drawn from U(−scale, scale).
    pub fn uniform(name: impl Into<String>, rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.uniform(-scale, scale)).collect();
        Self::new(name, ParamKind::Weight, Matrix::from_raw(rows, cols, data))
    }

    /// Draws from the substream of `rng` labelled with the parameter name, so
    /// the value does not depend on construction order.
    pub fn named_uniform(name: impl Into<String>, kind: ParamKind, rows: usize, cols: usize, scale: f64, rng: &Rng) -> Self {
        let name = name.into();
        let mut sub = rng.substream(&name);
        let mut p = Self::uniform(name, rows, cols, scale, &mut sub);
        p.kind = kind;
        p
    }

    /// Zero-initialized bias vector.
    pub fn bias(name: impl Into<String>, dim: usize) -> Self {
        Self::zeros(name, ParamKind::Bias, dim, 1)
    }

    pub fn is_vector(&self) -> bool {
        self.value.cols() == 1
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Flat view of the value (a bias reads as its entries).
    pub fn vals(&self) -> &[f64] {
        self.value.as_slice()
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        self.grad.as_mut_slice()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay: `value ← value·(1 − lr·weight_decay)` before the moment update.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.001, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// One bias-corrected Adam update. The gradient is zeroed afterwards.
pub fn adam_step(param: &mut ParamTensor, cfg: &AdamConfig) -> Result<()> {
    if param.grad.as_slice().iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of parameter `{}`", param.name)));
    }
    param.step_count += 1;
    let t = param.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - cfg.lr * cfg.weight_decay;

    let value = param.value.as_mut_slice();
    let grad = param.grad.as_mut_slice();
    let m = param.m.as_mut_slice();
    let v = param.v.as_mut_slice();
    for i in 0..value.len() {
        let g = grad[i];
        if cfg.weight_decay != 0.0 {
            value[i] *= decay;
        }
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        value[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        grad[i] = 0.0;
    }
    Ok(())
}
