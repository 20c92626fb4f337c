use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numcore::{add_into, Matrix, Rng, Vector};

use super::lstm::{cell_backward, cell_forward, AalstmParams, Cell, LstmParams, RnnState, StepCache};

/// Per-step hidden states plus the final recurrent state.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceOutput {
    /// T × dh; dh = dc (unidirectional) or 2·dc (bidirectional).
    pub h: Matrix,
    pub final_state: RnnState,
}

fn run_direction(cell: &Cell, xs: &Matrix, aspect: Option<&[f64]>, reverse: bool) -> Result<(Vec<RnnState>, Vec<StepCache>)> {
    let t_len = xs.rows();
    if t_len == 0 {
        return Err(Error::Empty("sequence"));
    }
    let mut state = RnnState::zeros(cell.dc());
    let mut states = Vec::with_capacity(t_len);
    let mut caches = Vec::with_capacity(t_len);
    for step in 0..t_len {
        let t = if reverse { t_len - 1 - step } else { step };
        let (next, cache) = cell_forward(cell, xs.row(t), aspect, &state)?;
        states.push(next.clone());
        caches.push(cache);
        state = next;
    }
    Ok((states, caches))
}

/// Runs a cell over `xs` from zero initial state.
pub fn run_sequence(cell: &Cell, xs: &Matrix, aspect: Option<&[f64]>) -> Result<SequenceOutput> {
    let (states, _) = run_direction(cell, xs, aspect, false)?;
    let rows: Vec<&[f64]> = states.iter().map(|s| s.h.as_slice()).collect();
    let h = Matrix::from_rows(&rows)?;
    Ok(SequenceOutput { h, final_state: states.last().cloned().expect("non-empty") })
}

/// Forward and backward cells; row t of the output is `[h_fwd(t), h_bwd(t)]`.
pub fn run_bidirectional(fwd: &Cell, bwd: &Cell, xs: &Matrix, aspect: Option<&[f64]>) -> Result<SequenceOutput> {
    let enc = RecurrentEncoderRef { fwd, bwd: Some(bwd) };
    let (out, _) = enc.forward(xs, aspect, aspect)?;
    Ok(out)
}

/// Which cell an encoder is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Vanilla,
    AspectAware,
}

/// A (possibly bidirectional) single-layer recurrent encoder that keeps the
/// activations needed for its backward pass.
#[derive(Clone, Debug)]
pub struct RecurrentEncoder {
    pub fwd: Cell,
    pub bwd: Option<Cell>,
}

#[derive(Clone, Debug)]
pub struct EncoderCache {
    fwd: Vec<StepCache>,
    bwd: Vec<StepCache>,
    aspect_fwd: Option<Vec<f64>>,
    aspect_bwd: Option<Vec<f64>>,
}

/// Gradients an encoder hands back to its inputs.
#[derive(Clone, Debug)]
pub struct EncoderGrads {
    pub dxs: Matrix,
    pub d_aspect_fwd: Option<Vec<f64>>,
    pub d_aspect_bwd: Option<Vec<f64>>,
}

struct RecurrentEncoderRef<'a> {
    fwd: &'a Cell,
    bwd: Option<&'a Cell>,
}

impl RecurrentEncoderRef<'_> {
    fn forward(&self, xs: &Matrix, aspect_fwd: Option<&[f64]>, aspect_bwd: Option<&[f64]>) -> Result<(SequenceOutput, EncoderCache)> {
        let (f_states, f_caches) = run_direction(self.fwd, xs, aspect_fwd, false)?;
        let t_len = xs.rows();
        let Some(bwd) = self.bwd else {
            let rows: Vec<&[f64]> = f_states.iter().map(|s| s.h.as_slice()).collect();
            let out = SequenceOutput { h: Matrix::from_rows(&rows)?, final_state: f_states[t_len - 1].clone() };
            let cache = EncoderCache { fwd: f_caches, bwd: Vec::new(), aspect_fwd: aspect_fwd.map(<[f64]>::to_vec), aspect_bwd: None };
            return Ok((out, cache));
        };
        if bwd.dc() != self.fwd.dc() {
            return Err(shape_err("run_bidirectional", format!("fwd dc={} vs bwd dc={}", self.fwd.dc(), bwd.dc())));
        }
        let (b_states, b_caches) = run_direction(bwd, xs, aspect_bwd, true)?;
        let dc = self.fwd.dc();
        let mut h = Matrix::zeros(t_len, 2 * dc);
        for t in 0..t_len {
            let row = h.row_mut(t);
            row[..dc].copy_from_slice(&f_states[t].h);
            // backward step k consumed position T−1−k
            row[dc..].copy_from_slice(&b_states[t_len - 1 - t].h);
        }
        let ff = &f_states[t_len - 1];
        let bf = &b_states[t_len - 1];
        let final_state = RnnState { h: Vector::concat(&[&ff.h, &bf.h]), c: Vector::concat(&[&ff.c, &bf.c]) };
        let cache = EncoderCache {
            fwd: f_caches,
            bwd: b_caches,
            aspect_fwd: aspect_fwd.map(<[f64]>::to_vec),
            aspect_bwd: aspect_bwd.map(<[f64]>::to_vec),
        };
        Ok((SequenceOutput { h, final_state }, cache))
    }
}

/// BPTT through one direction. `dh_rows(step)` yields the output gradient for
/// the step'th processed position.
fn backward_direction(
    cell: &mut Cell,
    caches: &[StepCache],
    aspect: Option<&[f64]>,
    dh_for_step: impl Fn(usize) -> Vec<f64>,
    mut put_dx: impl FnMut(usize, Vec<f64>),
) -> Option<Vec<f64>> {
    let dc = cell.dc();
    let mut dh_next = vec![0.0; dc];
    let mut dc_next = vec![0.0; dc];
    let mut d_aspect = aspect.map(|a| vec![0.0; a.len()]);
    for step in (0..caches.len()).rev() {
        let mut dh = dh_for_step(step);
        add_into(&mut dh, &dh_next);
        let g = cell_backward(cell, &caches[step], aspect, &dh, &dc_next);
        if let (Some(acc), Some(da)) = (d_aspect.as_mut(), g.d_aspect.as_ref()) {
            add_into(acc, da);
        }
        put_dx(step, g.dx);
        dh_next = g.dh_prev;
        dc_next = g.dc_prev;
    }
    d_aspect
}

impl RecurrentEncoder {
    /// Weights drawn from named substreams of `rng` under `prefix`.
    pub fn new(kind: CellKind, bidirectional: bool, prefix: &str, dx: usize, dc: usize, rng: &Rng) -> Self {
        let make = |p: &str| match kind {
            CellKind::Vanilla => Cell::Lstm(LstmParams::new(p, dx, dc, rng)),
            CellKind::AspectAware => Cell::Aalstm(AalstmParams::new(p, dx, dc, rng)),
        };
        Self { fwd: make(&format!("{prefix}.fwd")), bwd: bidirectional.then(|| make(&format!("{prefix}.bwd"))) }
    }

    pub fn dc(&self) -> usize {
        self.fwd.dc()
    }

    pub fn dx(&self) -> usize {
        self.fwd.dx()
    }

    pub fn out_dim(&self) -> usize {
        if self.bwd.is_some() {
            2 * self.dc()
        } else {
            self.dc()
        }
    }

    pub fn is_bidirectional(&self) -> bool {
        self.bwd.is_some()
    }

    pub fn is_aspect_aware(&self) -> bool {
        self.fwd.is_aspect_aware()
    }

    pub fn forward(&self, xs: &Matrix, aspect_fwd: Option<&[f64]>, aspect_bwd: Option<&[f64]>) -> Result<(SequenceOutput, EncoderCache)> {
        RecurrentEncoderRef { fwd: &self.fwd, bwd: self.bwd.as_ref() }.forward(xs, aspect_fwd, aspect_bwd)
    }

    /// Backpropagates `dh` (T × out_dim) and accumulates parameter gradients.
    pub fn backward(&mut self, cache: &EncoderCache, dh: &Matrix) -> EncoderGrads {
        let t_len = cache.fwd.len();
        let dc = self.dc();
        let mut dxs = Matrix::zeros(t_len, self.dx());
        let d_aspect_fwd = backward_direction(
            &mut self.fwd,
            &cache.fwd,
            cache.aspect_fwd.as_deref(),
            |t| dh.row(t)[..dc].to_vec(),
            |t, dx| add_into(dxs.row_mut(t), &dx),
        );
        let d_aspect_bwd = match self.bwd.as_mut() {
            Some(bwd) => backward_direction(
                bwd,
                &cache.bwd,
                cache.aspect_bwd.as_deref(),
                |step| dh.row(t_len - 1 - step)[dc..].to_vec(),
                |step, dx| add_into(dxs.row_mut(t_len - 1 - step), &dx),
            ),
            None => None,
        };
        EncoderGrads { dxs, d_aspect_fwd, d_aspect_bwd }
    }

    pub fn params(&self) -> Vec<&crate::numcore::ParamTensor> {
        let mut v = self.fwd.params();
        if let Some(b) = &self.bwd {
            v.extend(b.params());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut crate::numcore::ParamTensor> {
        let mut v = self.fwd.params_mut();
        if let Some(b) = &mut self.bwd {
            v.extend(b.params_mut());
        }
        v
    }
}

/// How a hidden-state sequence is reduced to one vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Last,
    Mean,
}

pub fn pool(h: &Matrix, mode: PoolMode) -> Result<Vector> {
    if h.rows() == 0 {
        return Err(Error::Empty("hidden-state matrix"));
    }
    Ok(match mode {
        PoolMode::Last => h.row_vector(h.rows() - 1),
        PoolMode::Mean => h.mean_rows(),
    })
}

/// Gradient of `pool` with respect to its T × d input.
pub fn pool_backward(t_len: usize, mode: PoolMode, d_out: &[f64]) -> Matrix {
    let mut g = Matrix::zeros(t_len, d_out.len());
    match mode {
        PoolMode::Last => g.row_mut(t_len - 1).copy_from_slice(d_out),
        PoolMode::Mean => {
            let s = 1.0 / t_len as f64;
            for t in 0..t_len {
                for (o, d) in g.row_mut(t).iter_mut().zip(d_out) {
                    *o = s * d;
                }
            }
        }
    }
    g
}
