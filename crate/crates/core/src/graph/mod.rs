//! Graph convolution over dependency trees: the vanilla layer and the
//! aspect-gated layer, with backward passes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numcore::{add_into, sigmoid_scalar, Matrix, ParamTensor, Rng, Vector};
use crate::rnn::INIT_SCALE;

/// Undirected graph with self loops in every neighbor list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    /// Sorted neighbor indices of `i`, including `i` itself.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Number of neighbors excluding self.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len() - 1
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        let mut edges = Vec::new();
        for i in 0..self.n() {
            for &j in &self.neighbors[i] {
                if i < j {
                    edges.push((perm[i], perm[j]));
                }
            }
        }
        build_graph(self.n(), &edges).expect("permutation keeps indices in range")
    }
}

/// Symmetrizes `edges`, adds self loops and deduplicates.
pub fn build_graph(n: usize, edges: &[(usize, usize)]) -> Result<Graph> {
    let mut sets: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
    for &(i, j) in edges {
        for k in [i, j] {
            if k >= n {
                return Err(Error::Index { what: "graph node", index: k, len: n });
            }
        }
        sets[i].insert(j);
        sets[j].insert(i);
    }
    Ok(Graph { neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect() })
}

/// Weights of a vanilla graph-convolution layer.
#[derive(Clone, Debug)]
pub struct GcnParams {
    /// d_out × d_in
    pub w_g: ParamTensor,
    pub b_g: ParamTensor,
}

impl GcnParams {
    pub fn new(prefix: &str, d_in: usize, d_out: usize, rng: &Rng) -> Self {
        let name = format!("{prefix}.w_g");
        let mut sub = rng.substream(&name);
        Self { w_g: ParamTensor::uniform(name, d_out, d_in, INIT_SCALE, &mut sub), b_g: ParamTensor::bias(format!("{prefix}.b_g"), d_out) }
    }

    pub fn d_in(&self) -> usize {
        self.w_g.value.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w_g.value.rows()
    }
}

/// Graph convolution whose neighbor messages pass through an aspect-conditioned gate.
#[derive(Clone, Debug)]
pub struct AagcnParams {
    pub base: GcnParams,
    /// d_out × (da + d_in); reads `[A, h_j]`.
    pub w_ac: ParamTensor,
    pub b_ac: ParamTensor,
}

impl AagcnParams {
    pub fn new(prefix: &str, d_in: usize, d_out: usize, da: usize, rng: &Rng) -> Self {
        let name = format!("{prefix}.w_ac");
        let mut sub = rng.substream(&name);
        Self {
            base: GcnParams::new(prefix, d_in, d_out, rng),
            w_ac: ParamTensor::uniform(name, d_out, da + d_in, INIT_SCALE, &mut sub),
            b_ac: ParamTensor::bias(format!("{prefix}.b_ac"), d_out),
        }
    }

    pub fn da(&self) -> usize {
        self.w_ac.value.cols() - self.base.d_in()
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LayerCache {
    h: Matrix,
    /// Ungated messages `W_g h_j`, n × d_out.
    messages: Matrix,
    /// Gate activations and their `[A, h_j]` inputs, aspect-aware layers only.
    gates: Option<(Matrix, Vec<Vec<f64>>)>,
}

fn check_input(op: &'static str, g: &Graph, h: &Matrix, d_in: usize) -> Result<()> {
    if h.rows() != g.n() {
        return Err(shape_err(op, format!("H has {} rows for a {}-node graph", h.rows(), g.n())));
    }
    if h.cols() != d_in {
        return Err(shape_err(op, format!("H has {} cols, layer expects {d_in}", h.cols())));
    }
    Ok(())
}

fn aggregate(g: &Graph, msgs: &Matrix, bias: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(g.n(), msgs.cols());
    for i in 0..g.n() {
        let scale = 1.0 / (g.degree(i) + 1) as f64;
        let row = out.row_mut(i);
        for &j in g.neighbors(i) {
            for (o, m) in row.iter_mut().zip(msgs.row(j)) {
                *o += scale * m;
            }
        }
        add_into(row, bias);
    }
    out
}

fn gcn_forward(p: &GcnParams, g: &Graph, h: &Matrix) -> Result<(Matrix, LayerCache)> {
    check_input("gcn_layer", g, h, p.d_in())?;
    let messages = h.matmul_t(&p.w_g.value)?;
    let out = aggregate(g, &messages, p.b_g.vals());
    Ok((out, LayerCache { h: h.clone(), messages, gates: None }))
}

fn aagcn_forward(p: &AagcnParams, g: &Graph, h: &Matrix, aspect: &[f64]) -> Result<(Matrix, LayerCache)> {
    check_input("aagcn_layer", g, h, p.base.d_in())?;
    if aspect.len() != p.da() {
        return Err(shape_err("aagcn_layer", format!("aspect dim {} vs gate expects {}", aspect.len(), p.da())));
    }
    let messages = h.matmul_t(&p.base.w_g.value)?;
    let d_out = p.base.d_out();
    let mut gates = Matrix::zeros(g.n(), d_out);
    let mut inputs = Vec::with_capacity(g.n());
    let mut gated = messages.clone();
    for j in 0..g.n() {
        let input = Vector::concat(&[aspect, h.row(j)]).into_vec();
        let z = p.w_ac.value.matvec_raw(&input);
        for k in 0..d_out {
            let s = sigmoid_scalar(z[k] + p.b_ac.vals()[k]);
            gates[(j, k)] = s;
            gated[(j, k)] *= s;
        }
        inputs.push(input);
    }
    let out = aggregate(g, &gated, p.base.b_g.vals());
    Ok((out, LayerCache { h: h.clone(), messages, gates: Some((gates, inputs)) }))
}

/// `h_i = Σ_{j∈N_i} W_g h_j / (d_i + 1) + b_g`, before any nonlinearity.
pub fn gcn_layer(p: &GcnParams, g: &Graph, h: &Matrix) -> Result<Matrix> {
    Ok(gcn_forward(p, g, h)?.0)
}

/// Like [`gcn_layer`] but each message `W_g h_j` is scaled elementwise by
/// `σ(W_ac [A, h_j] + b_ac)`.
pub fn aagcn_layer(p: &AagcnParams, g: &Graph, h: &Matrix, aspect: &[f64]) -> Result<Matrix> {
    Ok(aagcn_forward(p, g, h, aspect)?.0)
}

/// Gradient reaching each source node's message.
fn scatter_back(g: &Graph, d_out: &Matrix) -> Matrix {
    let mut d_msg = Matrix::zeros(g.n(), d_out.cols());
    for i in 0..g.n() {
        let scale = 1.0 / (g.degree(i) + 1) as f64;
        for &j in g.neighbors(i) {
            for (d, o) in d_msg.row_mut(j).iter_mut().zip(d_out.row(i)) {
                *d += scale * o;
            }
        }
    }
    d_msg
}

/// Returns `dH`; accumulates into `d_aspect` for gated layers.
fn layer_backward(layer: &mut GraphLayer, g: &Graph, cache: &LayerCache, d_out: &Matrix, d_aspect: &mut [f64]) -> Matrix {
    let (base, gate) = match layer {
        GraphLayer::Gcn(p) => (p, None),
        GraphLayer::Aagcn(p) => (&mut p.base, Some((&mut p.w_ac, &mut p.b_ac))),
    };
    for i in 0..g.n() {
        add_into(base.b_g.grads_mut(), d_out.row(i));
    }
    let mut d_msg = scatter_back(g, d_out);
    let mut dh = Matrix::zeros(g.n(), base.d_in());
    if let (Some((w_ac, b_ac)), Some((gates, inputs))) = (gate, cache.gates.as_ref()) {
        let da = d_aspect.len();
        for j in 0..g.n() {
            let dz: Vec<f64> = (0..gates.cols())
                .map(|k| {
                    let s = gates[(j, k)];
                    d_msg[(j, k)] * cache.messages[(j, k)] * s * (1.0 - s)
                })
                .collect();
            for k in 0..gates.cols() {
                d_msg[(j, k)] *= gates[(j, k)];
            }
            w_ac.grad.add_outer(1.0, &dz, &inputs[j]);
            add_into(b_ac.grads_mut(), &dz);
            let d_in = w_ac.value.matvec_t_raw(&dz);
            add_into(d_aspect, &d_in[..da]);
            add_into(dh.row_mut(j), &d_in[da..]);
        }
    }
    for j in 0..g.n() {
        base.w_g.grad.add_outer(1.0, d_msg.row(j), cache.h.row(j));
        add_into(dh.row_mut(j), &base.w_g.value.matvec_t_raw(d_msg.row(j)));
    }
    dh
}

/// One layer of a graph stack.
#[derive(Clone, Debug)]
pub enum GraphLayer {
    Gcn(GcnParams),
    Aagcn(AagcnParams),
}

impl GraphLayer {
    pub fn params(&self) -> Vec<&ParamTensor> {
        match self {
            GraphLayer::Gcn(p) => vec![&p.w_g, &p.b_g],
            GraphLayer::Aagcn(p) => vec![&p.base.w_g, &p.base.b_g, &p.w_ac, &p.b_ac],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        match self {
            GraphLayer::Gcn(p) => vec![&mut p.w_g, &mut p.b_g],
            GraphLayer::Aagcn(p) => vec![&mut p.base.w_g, &mut p.base.b_g, &mut p.w_ac, &mut p.b_ac],
        }
    }
}

/// Which graph layer a model stacks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Gcn,
    Aagcn,
}

/// Stacked graph layers of constant width, rectified between layers.
#[derive(Clone, Debug)]
pub struct GcnStack {
    pub layers: Vec<GraphLayer>,
    /// Apply `max(0, ·)` after every layer except the last.
    pub relu_between: bool,
}

#[derive(Clone, Debug)]
pub struct StackCache {
    layers: Vec<LayerCache>,
    /// Pre-activation outputs of each layer.
    pre: Vec<Matrix>,
    aspect_dim: usize,
    rectified: usize,
}

impl StackCache {
    /// Smallest `|x|` over rectified pre-activations, `None` with no rectifier.
    pub fn relu_margin(&self) -> Option<f64> {
        self.pre[..self.rectified]
            .iter()
            .flat_map(|m| m.as_slice().iter().map(|v| v.abs()))
            .reduce(f64::min)
    }
}

impl GcnStack {
    pub fn new(kind: GraphKind, n_layers: usize, dim: usize, da: usize, prefix: &str, rng: &Rng) -> Self {
        let layers = (0..n_layers)
            .map(|l| {
                let name = format!("{prefix}.{l}");
                match kind {
                    GraphKind::Gcn => GraphLayer::Gcn(GcnParams::new(&name, dim, dim, rng)),
                    GraphKind::Aagcn => GraphLayer::Aagcn(AagcnParams::new(&name, dim, dim, da, rng)),
                }
            })
            .collect();
        Self { layers, relu_between: true }
    }

    pub fn is_aspect_aware(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, GraphLayer::Aagcn(_)))
    }

    pub fn forward(&self, g: &Graph, h: &Matrix, aspect: Option<&[f64]>) -> Result<(Matrix, StackCache)> {
        let mut x = h.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let (out, cache) = match layer {
                GraphLayer::Gcn(p) => gcn_forward(p, g, &x)?,
                GraphLayer::Aagcn(p) => {
                    let a = aspect.ok_or_else(|| shape_err("aagcn_layer", "aspect-gated layer requires an aspect vector"))?;
                    aagcn_forward(p, g, &x, a)?
                }
            };
            caches.push(cache);
            x = if self.relu_between && l + 1 < self.layers.len() {
                let data = out.as_slice().iter().map(|v| v.max(0.0)).collect();
                Matrix::new(out.rows(), out.cols(), data)?
            } else {
                out.clone()
            };
            pre.push(out);
        }
        let rectified = if self.relu_between { self.layers.len().saturating_sub(1) } else { 0 };
        Ok((x, StackCache { layers: caches, pre, aspect_dim: aspect.map_or(0, <[f64]>::len), rectified }))
    }

    /// Returns `(dH, dA)`; `dA` is zero-length when no layer is gated.
    pub fn backward(&mut self, g: &Graph, cache: &StackCache, d_out: &Matrix) -> (Matrix, Vec<f64>) {
        let n_layers = self.layers.len();
        let mut d = d_out.clone();
        let mut d_aspect = vec![0.0; cache.aspect_dim];
        for l in (0..n_layers).rev() {
            if self.relu_between && l + 1 < n_layers {
                for (dv, pv) in d.as_mut_slice().iter_mut().zip(cache.pre[l].as_slice()) {
                    if *pv <= 0.0 {
                        *dv = 0.0;
                    }
                }
            }
            d = layer_backward(&mut self.layers[l], g, &cache.layers[l], &d, &mut d_aspect);
        }
        (d, d_aspect)
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}
