//! A small post-norm transformer encoder over the BERT-style input formats.

use serde::{Deserialize, Serialize};

use crate::backbones::{apply_mask, dropout_mask, Classifier, Dropout};
use crate::bert_fmt::{encode_sample, head_weights, FormatKind, HeadKind, TokenVocab, TokenizedInput};
use crate::data::Sample;
use crate::error::{shape_err, Error, Result};
use crate::numcore::{add_into, axpy, cross_entropy, dot, softmax, softmax_backward, Matrix, ParamKind, ParamTensor, Rng, Vector};

const EMB_SCALE: f64 = 0.1;
const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformerConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    /// Filled from the token vocabulary when the model is built.
    pub vocab_size: usize,
    pub n_segments: usize,
    pub dropout: f64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self { layers: 2, heads: 2, d_model: 32, d_ff: 64, max_len: 128, vocab_size: 0, n_segments: 2, dropout: 0.3 }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("d_model {} must be a positive multiple of heads {}", self.d_model, self.heads)));
        }
        if self.d_ff == 0 || self.max_len == 0 || self.vocab_size == 0 || self.n_segments == 0 {
            return Err(Error::Config("d_ff, max_len, vocab_size and n_segments must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

/// Weights of one encoder block.
#[derive(Clone, Debug)]
pub struct BlockParams {
    pub w_q: ParamTensor,
    pub b_q: ParamTensor,
    pub w_k: ParamTensor,
    pub b_k: ParamTensor,
    pub w_v: ParamTensor,
    pub b_v: ParamTensor,
    pub w_o: ParamTensor,
    pub b_o: ParamTensor,
    pub ln1_g: ParamTensor,
    pub ln1_b: ParamTensor,
    pub w_1: ParamTensor,
    pub b_1: ParamTensor,
    pub w_2: ParamTensor,
    pub b_2: ParamTensor,
    pub ln2_g: ParamTensor,
    pub ln2_b: ParamTensor,
}

fn weight(name: String, rows: usize, cols: usize, rng: &Rng) -> ParamTensor {
    ParamTensor::named_uniform(name, ParamKind::Weight, rows, cols, 1.0 / (cols as f64).sqrt(), rng)
}

fn gain(name: String, dim: usize) -> ParamTensor {
    ParamTensor::new(name, ParamKind::Norm, Matrix::from_raw(dim, 1, vec![1.0; dim]))
}

fn offset(name: String, dim: usize) -> ParamTensor {
    ParamTensor::zeros(name, ParamKind::Norm, dim, 1)
}

impl BlockParams {
    fn new(prefix: &str, d: usize, d_ff: usize, rng: &Rng) -> Self {
        let n = |s: &str| format!("{prefix}.{s}");
        Self {
            w_q: weight(n("w_q"), d, d, rng),
            b_q: ParamTensor::bias(n("b_q"), d),
            w_k: weight(n("w_k"), d, d, rng),
            b_k: ParamTensor::bias(n("b_k"), d),
            w_v: weight(n("w_v"), d, d, rng),
            b_v: ParamTensor::bias(n("b_v"), d),
            w_o: weight(n("w_o"), d, d, rng),
            b_o: ParamTensor::bias(n("b_o"), d),
            ln1_g: gain(n("ln1_g"), d),
            ln1_b: offset(n("ln1_b"), d),
            w_1: weight(n("w_1"), d_ff, d, rng),
            b_1: ParamTensor::bias(n("b_1"), d_ff),
            w_2: weight(n("w_2"), d, d_ff, rng),
            b_2: ParamTensor::bias(n("b_2"), d),
            ln2_g: gain(n("ln2_g"), d),
            ln2_b: offset(n("ln2_b"), d),
        }
    }

    fn params(&self) -> Vec<&ParamTensor> {
        vec![
            &self.w_q, &self.b_q, &self.w_k, &self.b_k, &self.w_v, &self.b_v, &self.w_o, &self.b_o, &self.ln1_g, &self.ln1_b,
            &self.w_1, &self.b_1, &self.w_2, &self.b_2, &self.ln2_g, &self.ln2_b,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![
            &mut self.w_q,
            &mut self.b_q,
            &mut self.w_k,
            &mut self.b_k,
            &mut self.w_v,
            &mut self.b_v,
            &mut self.w_o,
            &mut self.b_o,
            &mut self.ln1_g,
            &mut self.ln1_b,
            &mut self.w_1,
            &mut self.b_1,
            &mut self.w_2,
            &mut self.b_2,
            &mut self.ln2_g,
            &mut self.ln2_b,
        ]
    }
}

/// Embedding tables, encoder blocks and the classifier.
#[derive(Clone, Debug)]
pub struct TransformerParams {
    pub tok: ParamTensor,
    pub seg: ParamTensor,
    pub pos: ParamTensor,
    pub blocks: Vec<BlockParams>,
    pub classifier: Classifier,
    pub heads: usize,
}

impl TransformerParams {
    pub fn new(cfg: &TransformerConfig, rng: &Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let table = |name: &str, rows| ParamTensor::named_uniform(name, ParamKind::Embedding, rows, d, EMB_SCALE, rng);
        Ok(Self {
            tok: table("tf.emb.tok", cfg.vocab_size),
            seg: table("tf.emb.seg", cfg.n_segments),
            pos: table("tf.emb.pos", cfg.max_len),
            blocks: (0..cfg.layers).map(|l| BlockParams::new(&format!("tf.{l}"), d, cfg.d_ff, rng)).collect(),
            classifier: Classifier::new("cls", d, rng),
            heads: cfg.heads,
        })
    }

    pub fn d_model(&self) -> usize {
        self.tok.value.cols()
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut out = vec![&self.tok, &self.seg, &self.pos];
        out.extend(self.blocks.iter().flat_map(BlockParams::params));
        out.extend(self.classifier.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = vec![&mut self.tok, &mut self.seg, &mut self.pos];
        out.extend(self.blocks.iter_mut().flat_map(BlockParams::params_mut));
        out.extend(self.classifier.params_mut());
        out
    }
}

/// Row `t` is `tok[token_t] + seg[segment_t] + pos[t]`.
pub fn embed_input(p: &TransformerParams, input: &TokenizedInput<usize>) -> Result<Matrix> {
    let l = input.len();
    if input.segments.len() != l {
        return Err(shape_err("embed_input", format!("{} tokens, {} segments", l, input.segments.len())));
    }
    if l > p.pos.value.rows() {
        return Err(Error::Index { what: "position", index: l - 1, len: p.pos.value.rows() });
    }
    let mut e = Matrix::zeros(l, p.d_model());
    for (t, (&tok, &seg)) in input.tokens.iter().zip(&input.segments).enumerate() {
        if tok >= p.tok.value.rows() {
            return Err(Error::Index { what: "token id", index: tok, len: p.tok.value.rows() });
        }
        if seg as usize >= p.seg.value.rows() {
            return Err(Error::Index { what: "segment id", index: seg as usize, len: p.seg.value.rows() });
        }
        let row = e.row_mut(t);
        add_into(row, p.tok.value.row(tok));
        add_into(row, p.seg.value.row(seg as usize));
        add_into(row, p.pos.value.row(t));
    }
    Ok(e)
}

/// tanh approximation of the Gaussian error linear unit.
pub fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + gelu_inner(z).tanh())
}

fn gelu_inner(z: f64) -> f64 {
    (2.0 / std::f64::consts::PI).sqrt() * (z + 0.044715 * z * z * z)
}

pub fn gelu_grad(z: f64) -> f64 {
    let t = gelu_inner(z).tanh();
    let du = (2.0 / std::f64::consts::PI).sqrt() * (1.0 + 3.0 * 0.044715 * z * z);
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * du
}

/// `x Wᵀ + b` applied to every row.
fn linear(x: &Matrix, w: &ParamTensor, b: &ParamTensor) -> Result<Matrix> {
    let mut y = x.matmul_t(&w.value)?;
    for i in 0..y.rows() {
        add_into(y.row_mut(i), b.vals());
    }
    Ok(y)
}

fn linear_backward(x: &Matrix, dy: &Matrix, w: &mut ParamTensor, b: &mut ParamTensor) -> Result<Matrix> {
    for i in 0..dy.rows() {
        w.grad.add_outer(1.0, dy.row(i), x.row(i));
        add_into(b.grads_mut(), dy.row(i));
    }
    dy.matmul(&w.value)
}

#[derive(Clone, Debug)]
struct NormCache {
    xhat: Matrix,
    rstd: Vec<f64>,
}

fn layer_norm(x: &Matrix, g: &ParamTensor, b: &ParamTensor) -> (Matrix, NormCache) {
    let d = x.cols();
    let mut y = Matrix::zeros(x.rows(), d);
    let mut xhat = Matrix::zeros(x.rows(), d);
    let mut rstd = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = x.row(i);
        let mu = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd.push(r);
        for j in 0..d {
            let h = (row[j] - mu) * r;
            xhat[(i, j)] = h;
            y[(i, j)] = g.vals()[j] * h + b.vals()[j];
        }
    }
    (y, NormCache { xhat, rstd })
}

fn layer_norm_backward(c: &NormCache, dy: &Matrix, g: &mut ParamTensor, b: &mut ParamTensor) -> Matrix {
    let d = dy.cols();
    let mut dx = Matrix::zeros(dy.rows(), d);
    for i in 0..dy.rows() {
        let xh = c.xhat.row(i);
        let dyr = dy.row(i);
        let dxhat: Vec<f64> = dyr.iter().zip(g.vals()).map(|(a, gj)| a * gj).collect();
        for j in 0..d {
            g.grad.as_mut_slice()[j] += dyr[j] * xh[j];
            b.grad.as_mut_slice()[j] += dyr[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx = dot(&dxhat, xh) / d as f64;
        for j in 0..d {
            dx[(i, j)] = c.rstd[i] * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

#[derive(Clone, Debug)]
struct BlockCache {
    x: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// Attention weights per head, each L × L.
    probs: Vec<Matrix>,
    o: Matrix,
    ln1: NormCache,
    y: Matrix,
    z: Matrix,
    act: Matrix,
    ln2: NormCache,
}

/// Activations of [`encoder_forward`], kept for the backward pass.
#[derive(Clone, Debug)]
pub struct EncoderTrace {
    blocks: Vec<BlockCache>,
    heads: usize,
}

impl EncoderTrace {
    pub fn layers(&self) -> usize {
        self.blocks.len()
    }

    /// Attention weights of `head` in `layer`; row `i` is query position `i`.
    pub fn attention(&self, layer: usize, head: usize) -> &Matrix {
        &self.blocks[layer].probs[head]
    }
}

fn block_forward(p: &BlockParams, x: &Matrix, mask: &[bool], heads: usize) -> Result<(Matrix, BlockCache)> {
    let (l, d) = x.shape();
    let dk = d / heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let q = linear(x, &p.w_q, &p.b_q)?;
    let k = linear(x, &p.w_k, &p.b_k)?;
    let v = linear(x, &p.w_v, &p.b_v)?;
    let mut o = Matrix::zeros(l, d);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = h * dk..(h + 1) * dk;
        let mut ph = Matrix::zeros(l, l);
        for i in 0..l {
            let scores: Vec<f64> = (0..l)
                .map(|j| if mask[j] { dot(&q.row(i)[cols.clone()], &k.row(j)[cols.clone()]) * scale } else { f64::NEG_INFINITY })
                .collect();
            let pi = softmax(&scores);
            for j in 0..l {
                if pi[j] != 0.0 {
                    axpy(&mut o.row_mut(i)[cols.clone()], pi[j], &v.row(j)[cols.clone()]);
                }
            }
            ph.row_mut(i).copy_from_slice(&pi);
        }
        probs.push(ph);
    }
    let mut r1 = linear(&o, &p.w_o, &p.b_o)?;
    add_into(r1.as_mut_slice(), x.as_slice());
    let (y, ln1) = layer_norm(&r1, &p.ln1_g, &p.ln1_b);
    let z = linear(&y, &p.w_1, &p.b_1)?;
    let act = Matrix::new(z.rows(), z.cols(), z.as_slice().iter().map(|&v| gelu(v)).collect())?;
    let mut r2 = linear(&act, &p.w_2, &p.b_2)?;
    add_into(r2.as_mut_slice(), y.as_slice());
    let (out, ln2) = layer_norm(&r2, &p.ln2_g, &p.ln2_b);
    Ok((out, BlockCache { x: x.clone(), q, k, v, probs, o, ln1, y, z, act, ln2 }))
}

fn block_backward(p: &mut BlockParams, c: &BlockCache, d_out: &Matrix, heads: usize) -> Result<Matrix> {
    let (l, d) = c.x.shape();
    let dk = d / heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let dr2 = layer_norm_backward(&c.ln2, d_out, &mut p.ln2_g, &mut p.ln2_b);
    let dact = linear_backward(&c.act, &dr2, &mut p.w_2, &mut p.b_2)?;
    let dz_data = dact.as_slice().iter().zip(c.z.as_slice()).map(|(g, &z)| g * gelu_grad(z)).collect();
    let dz = Matrix::new(l, c.z.cols(), dz_data)?;
    let mut dy = linear_backward(&c.y, &dz, &mut p.w_1, &mut p.b_1)?;
    add_into(dy.as_mut_slice(), dr2.as_slice());
    let dr1 = layer_norm_backward(&c.ln1, &dy, &mut p.ln1_g, &mut p.ln1_b);
    let d_o = linear_backward(&c.o, &dr1, &mut p.w_o, &mut p.b_o)?;

    let mut dq = Matrix::zeros(l, d);
    let mut dkm = Matrix::zeros(l, d);
    let mut dv = Matrix::zeros(l, d);
    for h in 0..heads {
        let cols = h * dk..(h + 1) * dk;
        let ph = &c.probs[h];
        for i in 0..l {
            let doi = &d_o.row(i)[cols.clone()];
            let dp: Vec<f64> = (0..l).map(|j| dot(doi, &c.v.row(j)[cols.clone()])).collect();
            for j in 0..l {
                if ph[(i, j)] != 0.0 {
                    axpy(&mut dv.row_mut(j)[cols.clone()], ph[(i, j)], doi);
                }
            }
            let ds = softmax_backward(ph.row(i), &dp);
            for j in 0..l {
                if ds[j] != 0.0 {
                    axpy(&mut dq.row_mut(i)[cols.clone()], ds[j] * scale, &c.k.row(j)[cols.clone()]);
                    axpy(&mut dkm.row_mut(j)[cols.clone()], ds[j] * scale, &c.q.row(i)[cols.clone()]);
                }
            }
        }
    }
    let mut dx = dr1;
    let dxq = linear_backward(&c.x, &dq, &mut p.w_q, &mut p.b_q)?;
    let dxk = linear_backward(&c.x, &dkm, &mut p.w_k, &mut p.b_k)?;
    let dxv = linear_backward(&c.x, &dv, &mut p.w_v, &mut p.b_v)?;
    for part in [dxq, dxk, dxv] {
        add_into(dx.as_mut_slice(), part.as_slice());
    }
    Ok(dx)
}

/// Runs every block over `e`. Positions with `mask[t] == false` are never
/// attended to.
pub fn encoder_forward(p: &TransformerParams, e: &Matrix, mask: &[bool]) -> Result<(Matrix, EncoderTrace)> {
    let heads = p.heads;
    if e.cols() != p.d_model() {
        return Err(shape_err("encoder_forward", format!("input width {} vs d_model {}", e.cols(), p.d_model())));
    }
    if e.rows() > p.pos.value.rows() {
        return Err(Error::Index { what: "position", index: e.rows() - 1, len: p.pos.value.rows() });
    }
    if mask.len() != e.rows() || !mask.iter().any(|&m| m) {
        return Err(shape_err("encoder_forward", "mask must match the length and keep at least one position"));
    }
    let mut x = e.clone();
    let mut blocks = Vec::with_capacity(p.blocks.len());
    for b in &p.blocks {
        let (out, cache) = block_forward(b, &x, mask, heads)?;
        blocks.push(cache);
        x = out;
    }
    Ok((x, EncoderTrace { blocks, heads }))
}

/// Returns the gradient with respect to the encoder input.
fn encoder_backward(p: &mut TransformerParams, trace: &EncoderTrace, d_out: &Matrix) -> Result<Matrix> {
    let mut d = d_out.clone();
    for (b, c) in p.blocks.iter_mut().zip(&trace.blocks).rev() {
        d = block_backward(b, c, &d, trace.heads)?;
    }
    Ok(d)
}

/// An id-level input with its gold class.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformerSample {
    pub input: TokenizedInput<usize>,
    pub label: usize,
}

/// Activations from [`TransformerModel::forward`].
#[derive(Clone, Debug)]
pub struct TransformerCache {
    input: TokenizedInput<usize>,
    trace: EncoderTrace,
    h: Matrix,
    h_mask: Option<Vec<f64>>,
    head_w: Vec<f64>,
    r: Vec<f64>,
    pub probs: Vector,
}

impl TransformerCache {
    pub fn trace(&self) -> &EncoderTrace {
        &self.trace
    }

    /// Encoder outputs after dropout.
    pub fn hidden(&self) -> &Matrix {
        &self.h
    }
}

/// Tiny transformer with a format, a head and a classifier.
#[derive(Clone, Debug)]
pub struct TransformerModel {
    pub config: TransformerConfig,
    pub format: FormatKind,
    pub head: HeadKind,
    pub vocab: TokenVocab,
    pub params: TransformerParams,
}

impl TransformerModel {
    /// `config.vocab_size` is overwritten with the vocabulary size.
    pub fn new(mut config: TransformerConfig, format: FormatKind, head: HeadKind, vocab: TokenVocab, rng: &Rng) -> Result<Self> {
        config.vocab_size = vocab.len();
        let params = TransformerParams::new(&config, rng)?;
        Ok(Self { config, format, head, vocab, params })
    }

    pub fn encode(&self, s: &Sample) -> Result<TransformerSample> {
        let input = encode_sample(self.format, s, &self.vocab)?;
        if input.len() > self.config.max_len {
            return Err(Error::Config(format!("input of {} tokens exceeds max_len {}", input.len(), self.config.max_len)));
        }
        Ok(TransformerSample { input, label: s.polarity.index() })
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        self.params.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.params.params_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn forward(&self, x: &TransformerSample, dropout: Option<Dropout<'_>>) -> Result<(Vector, TransformerCache)> {
        let e = embed_input(&self.params, &x.input)?;
        let (mut h, trace) = encoder_forward(&self.params, &e, &x.input.attention_mask())?;
        let h_mask = dropout.filter(|d| d.p > 0.0).map(|d| dropout_mask(h.len(), d.p, d.rng));
        apply_mask(h.as_mut_slice(), h_mask.as_deref());
        let head_w = head_weights(&x.input, self.head)?;
        let mut r = vec![0.0; h.cols()];
        for (t, &w) in head_w.iter().enumerate() {
            if w != 0.0 {
                axpy(&mut r, w, h.row(t));
            }
        }
        let probs = self.params.classifier.forward(&r)?;
        Ok((probs.clone(), TransformerCache { input: x.input.clone(), trace, h, h_mask, head_w, r, probs }))
    }

    pub fn predict(&self, x: &TransformerSample) -> Result<Vector> {
        Ok(self.forward(x, None)?.0)
    }

    pub fn loss(&self, x: &TransformerSample) -> Result<f64> {
        Ok(cross_entropy(&self.predict(x)?, x.label)?.0)
    }

    /// Accumulates gradients of the cross-entropy loss and returns the loss.
    pub fn backward(&mut self, c: &TransformerCache, label: usize) -> Result<f64> {
        let (loss, d_logits) = cross_entropy(&c.probs, label)?;
        let dr = self.params.classifier.backward(&c.r, &d_logits);
        let mut dh = Matrix::zeros(c.h.rows(), c.h.cols());
        for (t, &w) in c.head_w.iter().enumerate() {
            if w != 0.0 {
                axpy(dh.row_mut(t), w, &dr);
            }
        }
        apply_mask(dh.as_mut_slice(), c.h_mask.as_deref());
        let de = encoder_backward(&mut self.params, &c.trace, &dh)?;
        let p = &mut self.params;
        for (t, (&tok, &seg)) in c.input.tokens.iter().zip(&c.input.segments).enumerate() {
            let g = de.row(t);
            add_into(p.tok.grad.row_mut(tok), g);
            add_into(p.seg.grad.row_mut(seg as usize), g);
            add_into(p.pos.grad.row_mut(t), g);
        }
        Ok(loss)
    }
}
