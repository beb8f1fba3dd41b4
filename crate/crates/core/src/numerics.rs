//! Normalization, stable softmax and the central-difference gradient oracle.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Norm floor below which a vector cannot be normalized.
pub const NORM_EPS: f64 = 1e-12;

/// Cosines are kept this far inside (-1, 1) before any `sqrt(1 - c^2)`.
pub const COS_CLAMP: f64 = 1e-7;

pub fn clamp_cos(c: f64) -> f64 {
    c.clamp(-1.0 + COS_CLAMP, 1.0 - COS_CLAMP)
}

pub fn norm(v: &[f64]) -> f64 {
    crate::tensor::dot(v, v).sqrt()
}

/// Returns `v / ‖v‖`.
pub fn l2_normalize(v: &Tensor) -> Result<Tensor> {
    let (unit, _) = normalize_slice(v.data())?;
    Ok(Tensor::from_parts(v.shape().to_vec(), unit))
}

/// Normalized copy and the original norm.
pub(crate) fn normalize_slice(v: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = norm(v);
    if !(n > NORM_EPS) {
        return Err(Error::ZeroVector { norm: n });
    }
    Ok((v.iter().map(|x| x / n).collect(), n))
}

pub fn softmax(logits: &Tensor) -> Tensor {
    Tensor::from_parts(logits.shape().to_vec(), softmax_slice(logits.data()))
}

pub(crate) fn softmax_slice(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    out
}

/// `ln Σ exp(z)`, max-shifted. Returns `-inf` for an empty slice.
pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub(crate) fn log_softmax_slice(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| v - lse).collect()
}

/// `|a - n| / max(1, |a|, |n|)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn finite_diff_grad<F>(f: F, x: &Tensor, h: f64) -> Tensor
where
    F: Fn(&Tensor) -> f64,
{
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    Tensor::from_parts(x.shape().to_vec(), grad)
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub per_coordinate_errors: Tensor,
    pub step: f64,
}

/// Compares an analytic gradient against central differences of `f` at `x`.
pub fn grad_check<F>(f: F, x: &Tensor, analytic: &Tensor, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> f64,
{
    if analytic.shape() != x.shape() {
        return Err(Error::ShapeMismatch(format!(
            "gradient {:?} vs point {:?}",
            analytic.shape(),
            x.shape()
        )));
    }
    let numeric = finite_diff_grad(f, x, h);
    let errs: Vec<f64> = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| rel_error(a, n))
        .collect();
    let max_rel_error = errs.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        per_coordinate_errors: Tensor::from_parts(x.shape().to_vec(), errs),
        step: h,
    })
}
