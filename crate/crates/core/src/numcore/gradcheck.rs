use crate::error::{shape_err, Error, Result};

use super::tensor::Vector;

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Relative error `|a − n| / max(|a|, |n|, 1e−8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Difference formula used for numeric derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`.
    #[default]
    Central,
    /// `(f(x−2h) − 8f(x−h) + 8f(x+h) − f(x+2h)) / 12h`, fourth-order accurate.
    FivePoint,
}

/// Step size and stencil for a finite-difference check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdScheme {
    pub h: f64,
    pub stencil: Stencil,
}

impl FdScheme {
    pub fn central(h: f64) -> Self {
        Self { h, stencil: Stencil::Central }
    }

    pub fn five_point(h: f64) -> Self {
        Self { h, stencil: Stencil::FivePoint }
    }
}

impl Default for FdScheme {
    fn default() -> Self {
        Self::central(DEFAULT_FD_STEP)
    }
}

impl From<f64> for FdScheme {
    fn from(h: f64) -> Self {
        Self::central(h)
    }
}

/// Central-difference gradient of `f` at `theta`.
pub fn numeric_gradient<F>(f: F, theta: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    numeric_gradient_with(f, theta, FdScheme::central(h))
}

/// Numeric gradient of `f` at `theta` under `scheme`.
pub fn numeric_gradient_with<F>(mut f: F, theta: &[f64], scheme: FdScheme) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let h = scheme.h;
    let offsets: &[(f64, f64)] = match scheme.stencil {
        Stencil::Central => &[(1.0, 0.5), (-1.0, -0.5)],
        Stencil::FivePoint => &[(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)],
    };
    let mut probe = theta.to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = probe[i];
        let mut acc = 0.0;
        for &(k, w) in offsets {
            probe[i] = orig + k * h;
            let v = f(&probe);
            if !v.is_finite() {
                probe[i] = orig;
                return Err(Error::NonFinite(format!("objective at coordinate {i}")));
            }
            acc += w * v;
        }
        probe[i] = orig;
        out.push(acc / h);
    }
    Ok(out)
}

/// Compares `analytic_grad` against central differences of `f` and returns the
/// largest per-coordinate relative error.
pub fn finite_diff_check<F>(f: F, theta: &Vector, analytic_grad: &Vector, h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    finite_diff_check_with(f, theta, analytic_grad, FdScheme::central(h))
}

/// [`finite_diff_check`] with an explicit stencil.
pub fn finite_diff_check_with<F>(f: F, theta: &Vector, analytic_grad: &Vector, scheme: FdScheme) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if theta.dim() != analytic_grad.dim() {
        return Err(shape_err("finite_diff_check", format!("theta dim {} vs grad dim {}", theta.dim(), analytic_grad.dim())));
    }
    let numeric = numeric_gradient_with(f, theta, scheme)?;
    Ok(analytic_grad
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max))
}

/// Result of checking one named parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
}

/// Checks every tensor returned by `params` on `model`.
///
/// `backward` must zero gradients, run forward and backward, and leave the
/// analytic gradients in each tensor's `grad`. `loss` evaluates the scalar
/// objective without touching gradients. Values are restored afterwards.
pub fn check_params<M, P, B, L>(
    model: &mut M,
    params: P,
    mut backward: B,
    loss: L,
    scheme: impl Into<FdScheme>,
) -> Result<Vec<ParamCheck>>
where
    P: Fn(&mut M) -> Vec<&mut super::ParamTensor>,
    B: FnMut(&mut M) -> Result<f64>,
    L: Fn(&M) -> Result<f64>,
{
    let scheme = scheme.into();
    backward(model)?;
    let snapshot: Vec<(String, Vec<f64>, Vec<f64>)> = params(model)
        .into_iter()
        .map(|p| (p.name.clone(), p.value.as_slice().to_vec(), p.grad.as_slice().to_vec()))
        .collect();
    let mut out = Vec::with_capacity(snapshot.len());
    for (k, (name, theta, analytic)) in snapshot.into_iter().enumerate() {
        let mut failure = None;
        let err = finite_diff_check_with(
            |probe| {
                params(model)[k].value.as_mut_slice().copy_from_slice(probe);
                match loss(model) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            &Vector::from(theta.clone()),
            &Vector::from(analytic),
            scheme,
        );
        params(model)[k].value.as_mut_slice().copy_from_slice(&theta);
        if let Some(e) = failure {
            return Err(e);
        }
        out.push(ParamCheck { name, entries: theta.len(), max_rel_error: err? });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::ops::sigmoid;
    use crate::numcore::rng::Rng;

    #[test]
    fn quadratic_is_exact() {
        let err = finite_diff_check(|x| x[0] * x[0], &Vector::from(vec![3.0]), &Vector::from(vec![6.0]), DEFAULT_FD_STEP).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn sigmoid_sum() {
        let mut rng = Rng::new(11);
        let theta: Vec<f64> = (0..6).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let analytic: Vec<f64> = sigmoid(&theta).iter().map(|s| s * (1.0 - s)).collect();
        let err = finite_diff_check(|x| sigmoid(x).sum(), &Vector::from(theta), &Vector::from(analytic), DEFAULT_FD_STEP).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let theta = Vector::from(vec![0.4, -1.1]);
        let analytic: Vec<f64> = sigmoid(&theta).iter().map(|s| 2.0 * s * (1.0 - s)).collect();
        let err = finite_diff_check(|x| sigmoid(x).sum(), &theta, &Vector::from(analytic), DEFAULT_FD_STEP).unwrap();
        assert!((err - 0.5).abs() < 1e-6, "{err}");
    }

    #[test]
    fn five_point_beats_central_on_cubic() {
        let theta = Vector::from(vec![0.7]);
        let exact = Vector::from(vec![3.0 * 0.49 + 2.0 * 0.7]);
        let f = |x: &[f64]| x[0].powi(3) + x[0] * x[0];
        let c = finite_diff_check_with(f, &theta, &exact, FdScheme::central(1e-2)).unwrap();
        let p = finite_diff_check_with(f, &theta, &exact, FdScheme::five_point(1e-2)).unwrap();
        assert!(c > 1e-5, "{c}");
        assert!(p < 1e-12, "{p}");
    }

    #[test]
    fn non_finite_objective_errors() {
        let r = finite_diff_check(|x| 1.0 / (x[0] - x[0]), &Vector::from(vec![1.0]), &Vector::from(vec![0.0]), 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
