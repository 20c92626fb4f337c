use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::fault;
use crate::numcore::{sigmoid_scalar, tanh_scalar, ParamTensor, Rng, Vector};

/// Uniform init range for all weight matrices.
pub const INIT_SCALE: f64 = 0.1;

/// Hidden and cell state of a recurrent step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnState {
    pub h: Vector,
    pub c: Vector,
}

impl RnnState {
    pub fn zeros(dc: usize) -> Self {
        Self { h: Vector::zeros(dc), c: Vector::zeros(dc) }
    }
}

/// Four-gate LSTM weights. Every gate reads `[x, h_prev]`.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w_i: ParamTensor,
    pub w_f: ParamTensor,
    pub w_c: ParamTensor,
    pub w_o: ParamTensor,
    pub b_i: ParamTensor,
    pub b_f: ParamTensor,
    pub b_c: ParamTensor,
    pub b_o: ParamTensor,
}

fn weight(prefix: &str, name: &str, rows: usize, cols: usize, rng: &Rng) -> ParamTensor {
    let full = format!("{prefix}.{name}");
    let mut sub = rng.substream(&full);
    ParamTensor::uniform(full, rows, cols, INIT_SCALE, &mut sub)
}

impl LstmParams {
    /// Weights from U(−0.1, 0.1), biases zero.
    pub fn new(prefix: &str, dx: usize, dc: usize, rng: &Rng) -> Self {
        let n = dx + dc;
        Self {
            w_i: weight(prefix, "w_i", dc, n, rng),
            w_f: weight(prefix, "w_f", dc, n, rng),
            w_c: weight(prefix, "w_c", dc, n, rng),
            w_o: weight(prefix, "w_o", dc, n, rng),
            b_i: ParamTensor::bias(format!("{prefix}.b_i"), dc),
            b_f: ParamTensor::bias(format!("{prefix}.b_f"), dc),
            b_c: ParamTensor::bias(format!("{prefix}.b_c"), dc),
            b_o: ParamTensor::bias(format!("{prefix}.b_o"), dc),
        }
    }

    pub fn dc(&self) -> usize {
        self.w_i.value.rows()
    }

    pub fn dx(&self) -> usize {
        self.w_i.value.cols() - self.dc()
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.w_i, &self.w_f, &self.w_c, &self.w_o, &self.b_i, &self.b_f, &self.b_c, &self.b_o]
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![
            &mut self.w_i,
            &mut self.w_f,
            &mut self.w_c,
            &mut self.w_o,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_c,
            &mut self.b_o,
        ]
    }

    fn validate(&self) -> Result<()> {
        let (dc, n) = self.w_i.shape();
        for w in [&self.w_f, &self.w_c, &self.w_o] {
            if w.shape() != (dc, n) {
                return Err(shape_err("LstmParams", format!("{} is {:?}, expected {:?}", w.name, w.shape(), (dc, n))));
            }
        }
        for b in [&self.b_i, &self.b_f, &self.b_c, &self.b_o] {
            if b.shape() != (dc, 1) {
                return Err(shape_err("LstmParams", format!("{} has {} entries, expected {dc}", b.name, b.len())));
            }
        }
        if n <= dc {
            return Err(shape_err("LstmParams", format!("gate width {n} leaves no input columns for dc={dc}")));
        }
        Ok(())
    }
}

/// LSTM weights plus the three aspect gates. Aspect gates read `[A, h_prev]`.
#[derive(Clone, Debug)]
pub struct AalstmParams {
    pub base: LstmParams,
    pub w_ai: ParamTensor,
    pub w_af: ParamTensor,
    pub w_ao: ParamTensor,
    pub b_ai: ParamTensor,
    pub b_af: ParamTensor,
    pub b_ao: ParamTensor,
}

impl AalstmParams {
    /// The aspect dimension equals `dc`.
    pub fn new(prefix: &str, dx: usize, dc: usize, rng: &Rng) -> Self {
        let da = dc;
        Self {
            base: LstmParams::new(prefix, dx, dc, rng),
            w_ai: weight(prefix, "w_ai", da, da + dc, rng),
            w_af: weight(prefix, "w_af", da, da + dc, rng),
            w_ao: weight(prefix, "w_ao", da, da + dc, rng),
            b_ai: ParamTensor::bias(format!("{prefix}.b_ai"), da),
            b_af: ParamTensor::bias(format!("{prefix}.b_af"), da),
            b_ao: ParamTensor::bias(format!("{prefix}.b_ao"), da),
        }
    }

    /// Assembles params from parts; rejects `da ≠ dc` and any inconsistent shape.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        base: LstmParams,
        w_ai: ParamTensor,
        w_af: ParamTensor,
        w_ao: ParamTensor,
        b_ai: ParamTensor,
        b_af: ParamTensor,
        b_ao: ParamTensor,
    ) -> Result<Self> {
        let p = Self { base, w_ai, w_af, w_ao, b_ai, b_af, b_ao };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let dc = self.base.dc();
        let da = self.w_ai.value.rows();
        if da != dc {
            return Err(shape_err("AalstmParams", format!("aspect dim da={da} must equal hidden dim dc={dc}")));
        }
        for w in [&self.w_ai, &self.w_af, &self.w_ao] {
            if w.shape() != (da, da + dc) {
                return Err(shape_err("AalstmParams", format!("{} is {:?}, expected {:?}", w.name, w.shape(), (da, da + dc))));
            }
        }
        for b in [&self.b_ai, &self.b_af, &self.b_ao] {
            if b.shape() != (da, 1) {
                return Err(shape_err("AalstmParams", format!("{} has {} entries, expected {da}", b.name, b.len())));
            }
        }
        Ok(())
    }

    pub fn da(&self) -> usize {
        self.w_ai.value.rows()
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut v = self.base.params();
        v.extend([&self.w_ai, &self.w_af, &self.w_ao, &self.b_ai, &self.b_af, &self.b_ao]);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut v = self.base.params_mut();
        v.extend([
            &mut self.w_ai,
            &mut self.w_af,
            &mut self.w_ao,
            &mut self.b_ai,
            &mut self.b_af,
            &mut self.b_ao,
        ]);
        v
    }
}

/// A recurrent cell: vanilla LSTM or the aspect-aware variant.
#[derive(Clone, Debug)]
pub enum Cell {
    Lstm(LstmParams),
    Aalstm(AalstmParams),
}

impl Cell {
    pub fn base(&self) -> &LstmParams {
        match self {
            Cell::Lstm(p) => p,
            Cell::Aalstm(p) => &p.base,
        }
    }

    pub fn dc(&self) -> usize {
        self.base().dc()
    }

    pub fn dx(&self) -> usize {
        self.base().dx()
    }

    pub fn is_aspect_aware(&self) -> bool {
        matches!(self, Cell::Aalstm(_))
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        match self {
            Cell::Lstm(p) => p.params(),
            Cell::Aalstm(p) => p.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        match self {
            Cell::Lstm(p) => p.params_mut(),
            Cell::Aalstm(p) => p.params_mut(),
        }
    }
}

/// Activations kept from a forward step for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct StepCache {
    xh: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
    aspect: Option<AspectCache>,
}

#[derive(Clone, Debug)]
struct AspectCache {
    ah: Vec<f64>,
    a_i: Vec<f64>,
    a_f: Vec<f64>,
    a_o: Vec<f64>,
}

fn gate_pre(w: &ParamTensor, b: &ParamTensor, input: &[f64]) -> Vec<f64> {
    let mut z = w.value.matvec_raw(input);
    crate::numcore::add_into(&mut z, b.vals());
    z
}

fn sigmoid_vec(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| sigmoid_scalar(v)).collect()
}

/// One forward step. `aspect` must be present iff the cell is aspect-aware.
pub(crate) fn cell_forward(cell: &Cell, x: &[f64], aspect: Option<&[f64]>, prev: &RnnState) -> Result<(RnnState, StepCache)> {
    match cell {
        Cell::Lstm(p) => forward_parts(p, None, x, aspect, prev),
        Cell::Aalstm(p) => forward_parts(&p.base, Some(p), x, aspect, prev),
    }
}

fn forward_parts(
    base: &LstmParams,
    gates: Option<&AalstmParams>,
    x: &[f64],
    aspect: Option<&[f64]>,
    prev: &RnnState,
) -> Result<(RnnState, StepCache)> {
    let (dx, dc) = (base.dx(), base.dc());
    if x.len() != dx {
        return Err(shape_err("lstm_step", format!("x has dim {}, cell expects dx={dx}", x.len())));
    }
    if prev.h.dim() != dc || prev.c.dim() != dc {
        return Err(shape_err("lstm_step", format!("state dims ({}, {}) vs dc={dc}", prev.h.dim(), prev.c.dim())));
    }
    let xh = Vector::concat(&[x, &prev.h]).into_vec();
    let mut zi = gate_pre(&base.w_i, &base.b_i, &xh);
    let mut zf = gate_pre(&base.w_f, &base.b_f, &xh);
    let zc = gate_pre(&base.w_c, &base.b_c, &xh);
    let mut zo = gate_pre(&base.w_o, &base.b_o, &xh);

    let aspect_cache = match (gates, aspect) {
        (Some(p), Some(a)) => {
            if a.len() != p.da() {
                return Err(shape_err("aalstm_step", format!("aspect vector has dim {}, expected da={}", a.len(), p.da())));
            }
            let ah = Vector::concat(&[a, &prev.h]).into_vec();
            let a_i = sigmoid_vec(&gate_pre(&p.w_ai, &p.b_ai, &ah));
            let a_f = sigmoid_vec(&gate_pre(&p.w_af, &p.b_af, &ah));
            let a_o = sigmoid_vec(&gate_pre(&p.w_ao, &p.b_ao, &ah));
            for k in 0..dc {
                zi[k] += a_i[k] * a[k];
                zf[k] += a_f[k] * a[k];
                zo[k] += a_o[k] * a[k];
            }
            Some(AspectCache { ah, a_i, a_f, a_o })
        }
        (Some(_), None) => return Err(shape_err("aalstm_step", "aspect-aware cell requires an aspect vector")),
        (None, Some(_)) => return Err(shape_err("lstm_step", "vanilla cell takes no aspect vector")),
        (None, None) => None,
    };

    let i = sigmoid_vec(&zi);
    let f = sigmoid_vec(&zf);
    let o = sigmoid_vec(&zo);
    let g: Vec<f64> = zc.iter().map(|&v| tanh_scalar(v)).collect();
    let c: Vec<f64> = (0..dc).map(|k| f[k] * prev.c[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|&v| tanh_scalar(v)).collect();
    let h: Vec<f64> = (0..dc).map(|k| o[k] * tanh_c[k]).collect();

    let state = RnnState { h: Vector::from_raw(h), c: Vector::from_raw(c) };
    let cache = StepCache { xh, c_prev: prev.c.to_vec(), i, f, o, g, tanh_c, aspect: aspect_cache };
    Ok((state, cache))
}

/// Gradients flowing out of one step.
pub(crate) struct StepGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
    /// Present for aspect-aware cells.
    pub d_aspect: Option<Vec<f64>>,
}

fn accumulate_gate(w: &mut ParamTensor, b: &mut ParamTensor, dz: &[f64], input: &[f64], d_input: &mut [f64]) {
    w.grad.add_outer(1.0, dz, input);
    crate::numcore::add_into(b.grads_mut(), dz);
    crate::numcore::add_into(d_input, &w.value.matvec_t_raw(dz));
}

/// Backward through one step given `dh` (total gradient on `h_t`) and `dc`
/// (gradient on `C_t` arriving from step `t+1`). Parameter gradients accumulate.
pub(crate) fn cell_backward(cell: &mut Cell, cache: &StepCache, aspect: Option<&[f64]>, dh: &[f64], dc_next: &[f64]) -> StepGrads {
    let dc = cell.dc();
    let dx_len = cell.dx();
    let mut dzi = vec![0.0; dc];
    let mut dzf = vec![0.0; dc];
    let mut dzc = vec![0.0; dc];
    let mut dzo = vec![0.0; dc];
    let mut dc_prev = vec![0.0; dc];
    for k in 0..dc {
        let (i, f, o, g, tc) = (cache.i[k], cache.f[k], cache.o[k], cache.g[k], cache.tanh_c[k]);
        let d_o = dh[k] * tc;
        let d_c = dc_next[k] + dh[k] * o * (1.0 - tc * tc);
        let d_f = d_c * cache.c_prev[k];
        let d_i = d_c * g;
        let d_g = d_c * i;
        dc_prev[k] = d_c * f;
        dzi[k] = d_i * i * (1.0 - i);
        dzf[k] = d_f * f * (1.0 - f);
        dzo[k] = d_o * o * (1.0 - o);
        dzc[k] = d_g * (1.0 - g * g);
    }

    let mut dxh = vec![0.0; dx_len + dc];
    let mut d_aspect = None;
    let mut dh_prev_aspect = None;

    match cell {
        Cell::Lstm(p) => {
            accumulate_base(p, cache, &dzi, &dzf, &dzc, &dzo, &mut dxh);
        }
        Cell::Aalstm(p) => {
            accumulate_base(&mut p.base, cache, &dzi, &dzf, &dzc, &dzo, &mut dxh);
            let ac = cache.aspect.as_ref().expect("aspect cache present for aspect-aware step");
            let a = aspect.expect("aspect vector present for aspect-aware step");
            let da = p.da();
            let mut dah = vec![0.0; da + dc];
            let mut d_a = vec![0.0; da];
            let flip_af = fault::active(fault::Fault::FlipAspectForgetBackward);
            for (gate, dz) in [(0, &dzi), (1, &dzf), (2, &dzo)] {
                let act = match gate {
                    0 => &ac.a_i,
                    1 => &ac.a_f,
                    _ => &ac.a_o,
                };
                // z += act ⊙ A
                let mut dz_gate = vec![0.0; da];
                for k in 0..da {
                    d_a[k] += dz[k] * act[k];
                    dz_gate[k] = dz[k] * a[k] * act[k] * (1.0 - act[k]);
                }
                if gate == 1 && flip_af {
                    dz_gate.iter_mut().for_each(|v| *v = -*v);
                }
                let (w, b) = match gate {
                    0 => (&mut p.w_ai, &mut p.b_ai),
                    1 => (&mut p.w_af, &mut p.b_af),
                    _ => (&mut p.w_ao, &mut p.b_ao),
                };
                accumulate_gate(w, b, &dz_gate, &ac.ah, &mut dah);
            }
            crate::numcore::add_into(&mut d_a, &dah[..da]);
            dh_prev_aspect = Some(dah[da..].to_vec());
            d_aspect = Some(d_a);
        }
    }

    let dx = dxh[..dx_len].to_vec();
    let mut dh_prev = dxh[dx_len..].to_vec();
    if let Some(extra) = dh_prev_aspect {
        crate::numcore::add_into(&mut dh_prev, &extra);
    }
    StepGrads { dx, dh_prev, dc_prev, d_aspect }
}

fn accumulate_base(p: &mut LstmParams, cache: &StepCache, dzi: &[f64], dzf: &[f64], dzc: &[f64], dzo: &[f64], dxh: &mut [f64]) {
    accumulate_gate(&mut p.w_i, &mut p.b_i, dzi, &cache.xh, dxh);
    accumulate_gate(&mut p.w_f, &mut p.b_f, dzf, &cache.xh, dxh);
    accumulate_gate(&mut p.w_c, &mut p.b_c, dzc, &cache.xh, dxh);
    accumulate_gate(&mut p.w_o, &mut p.b_o, dzo, &cache.xh, dxh);
}

/// One vanilla LSTM step.
pub fn lstm_step(p: &LstmParams, x: &[f64], prev: &RnnState) -> Result<RnnState> {
    p.validate()?;
    Ok(forward_parts(p, None, x, None, prev)?.0)
}

/// One aspect-aware LSTM step.
pub fn aalstm_step(p: &AalstmParams, x: &[f64], aspect: &[f64], prev: &RnnState) -> Result<RnnState> {
    p.validate()?;
    Ok(forward_parts(&p.base, Some(p), x, Some(aspect), prev)?.0)
}
