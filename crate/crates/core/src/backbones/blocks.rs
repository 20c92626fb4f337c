use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numcore::{add_into, axpy, dot, softmax, softmax_backward, tanh_scalar, Matrix, ParamKind, ParamTensor, Rng, Vector};
use crate::rnn::INIT_SCALE;

/// Where a sample's aspect vector comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AspectMode {
    /// Mean of the aspect tokens' word embeddings.
    AvgEmbedding,
    /// Mean of the encoder hidden states at the aspect positions.
    AvgHidden,
    /// Row of a trainable category table.
    LearnedCategory,
}

/// Builds the aspect vector.
///
/// `context` is the sentence embedding matrix (`AvgEmbedding`), the hidden
/// states (`AvgHidden`) or the category table (`LearnedCategory`).
pub fn aspect_vector(mode: AspectMode, span: Option<(usize, usize)>, category: Option<usize>, context: &Matrix) -> Result<Vector> {
    match mode {
        AspectMode::AvgEmbedding | AspectMode::AvgHidden => {
            let (s, e) = span.ok_or(Error::Empty("aspect span"))?;
            if s >= e {
                return Err(Error::Empty("aspect span"));
            }
            if e > context.rows() {
                return Err(Error::Index { what: "aspect span end", index: e, len: context.rows() });
            }
            Ok(span_mean(context, s, e))
        }
        AspectMode::LearnedCategory => {
            let k = category.ok_or_else(|| Error::Lookup("sample has no category id".into()))?;
            if k >= context.rows() {
                return Err(Error::Lookup(format!("category id {k} outside table of {}", context.rows())));
            }
            Ok(context.row_vector(k))
        }
    }
}

pub(crate) fn span_mean(m: &Matrix, s: usize, e: usize) -> Vector {
    let mut out = vec![0.0; m.cols()];
    for t in s..e {
        add_into(&mut out, m.row(t));
    }
    let n = (e - s) as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Vector::from(out)
}

/// Adds `d / (e − s)` to each row of `dm` in `s..e`.
pub(crate) fn span_mean_backward(dm: &mut Matrix, s: usize, e: usize, d: &[f64]) {
    let n = (e - s) as f64;
    for t in s..e {
        axpy(dm.row_mut(t), 1.0 / n, d);
    }
}

/// Additive attention `score_t = vᵀ tanh(W_att [h_t, A] + b_att)`.
#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub w_att: ParamTensor,
    pub b_att: ParamTensor,
    pub v: ParamTensor,
}

#[derive(Clone, Debug)]
pub(crate) struct AttentionCache {
    h: Matrix,
    a_len: usize,
    inputs: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    pub(crate) weights: Vector,
}

impl AttentionParams {
    pub fn new(prefix: &str, dh: usize, da: usize, d_att: usize, rng: &Rng) -> Self {
        Self {
            w_att: ParamTensor::named_uniform(format!("{prefix}.w_att"), ParamKind::Weight, d_att, dh + da, INIT_SCALE, rng),
            b_att: ParamTensor::bias(format!("{prefix}.b_att"), d_att),
            v: ParamTensor::named_uniform(format!("{prefix}.v"), ParamKind::Weight, d_att, 1, INIT_SCALE, rng),
        }
    }

    pub fn d_att(&self) -> usize {
        self.w_att.value.rows()
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.w_att, &self.b_att, &self.v]
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.w_att, &mut self.b_att, &mut self.v]
    }

    pub(crate) fn forward(&self, h: &Matrix, a: &[f64]) -> Result<(Vector, AttentionCache)> {
        let t_len = h.rows();
        if t_len == 0 {
            return Err(Error::Empty("attention input"));
        }
        if h.cols() + a.len() != self.w_att.value.cols() {
            return Err(shape_err(
                "additive_attention",
                format!("[h, A] has width {}+{}, W_att expects {}", h.cols(), a.len(), self.w_att.value.cols()),
            ));
        }
        let mut scores = Vec::with_capacity(t_len);
        let mut inputs = Vec::with_capacity(t_len);
        let mut zs = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let input = Vector::concat(&[h.row(t), a]).into_vec();
            let mut u = self.w_att.value.matvec_raw(&input);
            add_into(&mut u, self.b_att.vals());
            let z: Vec<f64> = u.into_iter().map(tanh_scalar).collect();
            scores.push(dot(&z, self.v.vals()));
            inputs.push(input);
            zs.push(z);
        }
        let weights = softmax(&scores);
        let mut summary = vec![0.0; h.cols()];
        for t in 0..t_len {
            axpy(&mut summary, weights[t], h.row(t));
        }
        let cache = AttentionCache { h: h.clone(), a_len: a.len(), inputs, z: zs, weights };
        Ok((Vector::from(summary), cache))
    }

    /// Returns `(dH, dA)` for a gradient on the summary.
    pub(crate) fn backward(&mut self, c: &AttentionCache, d_summary: &[f64]) -> (Matrix, Vec<f64>) {
        let (t_len, dh) = c.h.shape();
        let mut d_h = Matrix::zeros(t_len, dh);
        let mut d_a = vec![0.0; c.a_len];
        let d_w: Vec<f64> = (0..t_len).map(|t| dot(c.h.row(t), d_summary)).collect();
        for t in 0..t_len {
            axpy(d_h.row_mut(t), c.weights[t], d_summary);
        }
        let ds = softmax_backward(&c.weights, &d_w);
        for t in 0..t_len {
            let z = &c.z[t];
            add_into(self.v.grads_mut(), &z.iter().map(|v| ds[t] * v).collect::<Vec<_>>());
            let du: Vec<f64> = z.iter().zip(self.v.vals()).map(|(zk, vk)| ds[t] * vk * (1.0 - zk * zk)).collect();
            self.w_att.grad.add_outer(1.0, &du, &c.inputs[t]);
            add_into(self.b_att.grads_mut(), &du);
            let d_in = self.w_att.value.matvec_t_raw(&du);
            add_into(d_h.row_mut(t), &d_in[..dh]);
            add_into(&mut d_a, &d_in[dh..]);
        }
        (d_h, d_a)
    }
}

/// Attention weights and summary over the rows of `h` keyed by `a`.
pub fn additive_attention(p: &AttentionParams, h: &Matrix, a: &[f64]) -> Result<(Vector, Vector)> {
    let (summary, cache) = p.forward(h, a)?;
    Ok((cache.weights, summary))
}

/// Three-way softmax classifier.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub w_cls: ParamTensor,
    pub b_cls: ParamTensor,
}

pub const NUM_CLASSES: usize = 3;

impl Classifier {
    pub fn new(prefix: &str, dr: usize, rng: &Rng) -> Self {
        Self {
            w_cls: ParamTensor::named_uniform(format!("{prefix}.w_cls"), ParamKind::Weight, NUM_CLASSES, dr, INIT_SCALE, rng),
            b_cls: ParamTensor::bias(format!("{prefix}.b_cls"), NUM_CLASSES),
        }
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.w_cls, &self.b_cls]
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.w_cls, &mut self.b_cls]
    }

    pub fn forward(&self, r: &[f64]) -> Result<Vector> {
        classify_head(&self.w_cls.value, self.b_cls.vals(), r)
    }

    /// Backward from a logit gradient; returns `dr`.
    pub(crate) fn backward(&mut self, r: &[f64], d_logits: &[f64]) -> Vec<f64> {
        self.w_cls.grad.add_outer(1.0, d_logits, r);
        add_into(self.b_cls.grads_mut(), d_logits);
        self.w_cls.value.matvec_t_raw(d_logits)
    }
}

/// `softmax(W_cls r + b_cls)`.
pub fn classify_head(w_cls: &Matrix, b_cls: &[f64], r: &[f64]) -> Result<Vector> {
    if w_cls.rows() != b_cls.len() {
        return Err(shape_err("classify_head", format!("W_cls has {} rows, b_cls {}", w_cls.rows(), b_cls.len())));
    }
    let mut logits = w_cls.matvec(r)?.into_vec();
    add_into(&mut logits, b_cls);
    Ok(softmax(&logits))
}

/// Inverted dropout mask: entries are 0 with probability `p`, else `1/(1−p)`.
pub(crate) fn dropout_mask(n: usize, p: f64, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..n).map(|_| if rng.uniform(0.0, 1.0) < p { 0.0 } else { keep }).collect()
}

pub(crate) fn apply_mask(x: &mut [f64], mask: Option<&[f64]>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aspect_vector_modes() {
        let m = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [3.0, 3.0]]).unwrap();
        assert_eq!(aspect_vector(AspectMode::AvgEmbedding, Some((0, 2)), None, &m).unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(aspect_vector(AspectMode::AvgHidden, Some((2, 3)), None, &m).unwrap().as_slice(), &[3.0, 3.0]);
        assert_eq!(aspect_vector(AspectMode::LearnedCategory, None, Some(1), &m).unwrap().as_slice(), &[0.0, 1.0]);
        assert!(matches!(aspect_vector(AspectMode::AvgEmbedding, Some((1, 1)), None, &m), Err(Error::Empty(_))));
        assert!(matches!(aspect_vector(AspectMode::LearnedCategory, None, Some(3), &m), Err(Error::Lookup(_))));
    }

    fn attention(dh: usize, da: usize) -> AttentionParams {
        AttentionParams::new("att", dh, da, 3, &Rng::new(4))
    }

    #[test]
    fn zero_v_is_uniform() {
        let mut p = attention(2, 1);
        p.v.value.fill(0.0);
        let h = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 0.0]]).unwrap();
        let (w, s) = additive_attention(&p, &h, &[0.3]).unwrap();
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert!(s.max_abs_diff(&h.mean_rows()) < 1e-15);
    }

    #[test]
    fn single_row_gets_all_weight() {
        let p = attention(2, 2);
        let h = Matrix::from_rows(&[[0.7, -0.2]]).unwrap();
        let (w, s) = additive_attention(&p, &h, &[1.0, 1.0]).unwrap();
        assert_eq!(w.as_slice(), &[1.0]);
        assert_eq!(s.as_slice(), &[0.7, -0.2]);
    }

    #[test]
    fn hand_scores_give_one_third_two_thirds() {
        // score_t = tanh(h_t), so rows [0, atanh(ln 2)] score [0, ln 2]
        let mut p = AttentionParams::new("att", 1, 1, 1, &Rng::new(0));
        p.w_att.value = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        p.v.value = Matrix::from_rows(&[[1.0]]).unwrap();
        let h = Matrix::from_rows(&[[0.0], [2f64.ln().atanh()]]).unwrap();
        let (w, _) = additive_attention(&p, &h, &[5.0]).unwrap();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn classify_examples() {
        let w = Matrix::zeros(3, 2);
        let p = classify_head(&w, &[0.0; 3], &[1.0, -1.0]).unwrap();
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let p = classify_head(&w, &[2f64.ln(), 0.0, 0.0], &[1.0, -1.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15 && (p[2] - 0.25).abs() < 1e-15);
        let shifted = classify_head(&w, &[2f64.ln() + 7.0, 7.0, 7.0], &[1.0, -1.0]).unwrap();
        assert_eq!(p.argmax(), shifted.argmax());
        assert!(classify_head(&w, &[0.0; 2], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn dropout_mask_is_inverted() {
        let m = dropout_mask(1000, 0.5, &mut Rng::new(2));
        assert!(m.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = m.iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept));
    }
}
