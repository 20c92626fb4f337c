use crate::error::{shape_err, Result};
use crate::numcore::{add_into, sigmoid_scalar, tanh_scalar, ParamTensor, Rng, Vector};

use super::lstm::INIT_SCALE;

/// Standard GRU: update gate `z`, reset gate `r`, candidate `n`.
///
/// `h' = (1 − z) ⊙ h + z ⊙ n`, with `n = tanh(W_h x + U_h (r ⊙ h) + b_h)`.
#[derive(Clone, Debug)]
pub struct GruParams {
    pub w_z: ParamTensor,
    pub u_z: ParamTensor,
    pub b_z: ParamTensor,
    pub w_r: ParamTensor,
    pub u_r: ParamTensor,
    pub b_r: ParamTensor,
    pub w_h: ParamTensor,
    pub u_h: ParamTensor,
    pub b_h: ParamTensor,
}

impl GruParams {
    pub fn new(prefix: &str, dx: usize, dg: usize, rng: &Rng) -> Self {
        let w = |name: &str, cols: usize| {
            let full = format!("{prefix}.{name}");
            let mut sub = rng.substream(&full);
            ParamTensor::uniform(full, dg, cols, INIT_SCALE, &mut sub)
        };
        Self {
            w_z: w("w_z", dx),
            u_z: w("u_z", dg),
            b_z: ParamTensor::bias(format!("{prefix}.b_z"), dg),
            w_r: w("w_r", dx),
            u_r: w("u_r", dg),
            b_r: ParamTensor::bias(format!("{prefix}.b_r"), dg),
            w_h: w("w_h", dx),
            u_h: w("u_h", dg),
            b_h: ParamTensor::bias(format!("{prefix}.b_h"), dg),
        }
    }

    pub fn dg(&self) -> usize {
        self.w_z.value.rows()
    }

    pub fn dx(&self) -> usize {
        self.w_z.value.cols()
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r, &self.b_r, &self.w_h, &self.u_h, &self.b_h]
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }
}

#[derive(Clone, Debug)]
pub(crate) struct GruCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    rh: Vec<f64>,
}

fn pre(w: &ParamTensor, u: &ParamTensor, b: &ParamTensor, x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut z = w.value.matvec_raw(x);
    add_into(&mut z, &u.value.matvec_raw(h));
    add_into(&mut z, b.vals());
    z
}

pub(crate) fn gru_forward(p: &GruParams, x: &[f64], h_prev: &[f64]) -> Result<(Vector, GruCache)> {
    let dg = p.dg();
    if x.len() != p.dx() || h_prev.len() != dg {
        return Err(shape_err("gru_step", format!("x dim {} / h dim {} vs dx={} dg={dg}", x.len(), h_prev.len(), p.dx())));
    }
    let z: Vec<f64> = pre(&p.w_z, &p.u_z, &p.b_z, x, h_prev).into_iter().map(sigmoid_scalar).collect();
    let r: Vec<f64> = pre(&p.w_r, &p.u_r, &p.b_r, x, h_prev).into_iter().map(sigmoid_scalar).collect();
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let n: Vec<f64> = pre(&p.w_h, &p.u_h, &p.b_h, x, &rh).into_iter().map(tanh_scalar).collect();
    let h: Vec<f64> = (0..dg).map(|k| (1.0 - z[k]) * h_prev[k] + z[k] * n[k]).collect();
    let cache = GruCache { x: x.to_vec(), h_prev: h_prev.to_vec(), z, r, n, rh };
    Ok((Vector::from_raw(h), cache))
}

/// Backward through one GRU step; returns `(dx, dh_prev)`.
pub(crate) fn gru_backward(p: &mut GruParams, c: &GruCache, dh: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dg = p.dg();
    let mut dx = vec![0.0; p.dx()];
    let mut dh_prev: Vec<f64> = (0..dg).map(|k| dh[k] * (1.0 - c.z[k])).collect();

    let dzn: Vec<f64> = (0..dg).map(|k| dh[k] * c.z[k] * (1.0 - c.n[k] * c.n[k])).collect();
    let dzz: Vec<f64> = (0..dg).map(|k| dh[k] * (c.n[k] - c.h_prev[k]) * c.z[k] * (1.0 - c.z[k])).collect();

    p.w_h.grad.add_outer(1.0, &dzn, &c.x);
    p.u_h.grad.add_outer(1.0, &dzn, &c.rh);
    add_into(p.b_h.grads_mut(), &dzn);
    add_into(&mut dx, &p.w_h.value.matvec_t_raw(&dzn));
    let d_rh = p.u_h.value.matvec_t_raw(&dzn);
    let dzr: Vec<f64> = (0..dg).map(|k| d_rh[k] * c.h_prev[k] * c.r[k] * (1.0 - c.r[k])).collect();
    for k in 0..dg {
        dh_prev[k] += d_rh[k] * c.r[k];
    }

    for (w, u, b, dz) in [(&mut p.w_z, &mut p.u_z, &mut p.b_z, &dzz), (&mut p.w_r, &mut p.u_r, &mut p.b_r, &dzr)] {
        w.grad.add_outer(1.0, dz, &c.x);
        u.grad.add_outer(1.0, dz, &c.h_prev);
        add_into(b.grads_mut(), dz);
        add_into(&mut dx, &w.value.matvec_t_raw(dz));
        add_into(&mut dh_prev, &u.value.matvec_t_raw(dz));
    }
    (dx, dh_prev)
}

/// One GRU step.
pub fn gru_step(p: &GruParams, x: &[f64], h_prev: &[f64]) -> Result<Vector> {
    Ok(gru_forward(p, x, h_prev)?.0)
}
