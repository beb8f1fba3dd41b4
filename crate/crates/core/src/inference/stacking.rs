//! Stacking: multinomial logistic regression over concatenated member probabilities.

use serde::{Deserialize, Serialize};

use super::{EnsembleSpec, LogitMatrix};
use crate::error::{Error, Result};
use crate::numerics::softmax_slice;
use crate::tensor::{argmax, dot, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackingConfig {
    /// L2 penalty `λ/2 · (‖W‖² + ‖b‖²)`, so a huge λ pulls the model to the uniform prior.
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once every gradient entry is at most this in magnitude.
    pub tolerance: f64,
}

impl Default for StackingConfig {
    fn default() -> Self {
        Self { lambda: 1e-3, max_iters: 5000, tolerance: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StackingModel {
    /// `K × (M·K)`
    pub weights: Tensor,
    /// `K`
    pub bias: Tensor,
    pub members: usize,
    /// Gradient steps taken during fitting.
    pub iterations: usize,
}

impl StackingModel {
    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    /// Meta logits for one concatenated feature row.
    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        let f = features.len();
        (0..self.classes()).map(|c| self.bias.data()[c] + dot(&self.weights.data()[c * f..(c + 1) * f], features)).collect()
    }
}

/// `N × (M·K)` concatenated member softmax rows.
fn features(members: &[&LogitMatrix]) -> Tensor {
    let n = members[0].len();
    let k = members[0].classes();
    let probs: Vec<Tensor> = members.iter().map(|m| m.probabilities()).collect();
    let mut data = Vec::with_capacity(n * members.len() * k);
    for i in 0..n {
        for p in &probs {
            data.extend_from_slice(p.row(i));
        }
    }
    Tensor::from_parts(vec![n, members.len() * k], data)
}

/// Full-batch gradient descent from zero with step `1 / L`, where
/// `L = (M + 1) / 2 + λ` bounds the curvature of the penalized objective.
pub fn fit_stacking(members: &[LogitMatrix], labels: &[usize], cfg: &StackingConfig) -> Result<StackingModel> {
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) || !(cfg.tolerance > 0.0) {
        return Err(Error::ConfigInvalid(format!("bad stacking config {cfg:?}")));
    }
    let spec = EnsembleSpec::uniform(members.to_vec())?;
    let refs: Vec<&LogitMatrix> = spec.members.iter().map(|m| &m.matrix).collect();
    let (n, k) = (refs[0].len(), refs[0].classes());
    if labels.len() != n {
        return Err(Error::LengthMismatch { left: labels.len(), right: n });
    }
    if n == 0 {
        return Err(Error::DataEmpty);
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::LabelOutOfRange { label: bad, classes: k });
    }
    let x = features(&refs);
    let f = x.shape()[1];
    let constant = (0..f).all(|j| x.rows().all(|r| r[j] == x.row(0)[j]));
    if constant {
        return Err(Error::DegenerateInput("every stacking feature is constant across rows".into()));
    }

    let step = 1.0 / (0.5 * (members.len() as f64 + 1.0) + cfg.lambda);
    let inv_n = 1.0 / n as f64;
    let mut w = vec![0.0; k * f];
    let mut b = vec![0.0; k];
    let mut gw = vec![0.0; k * f];
    let mut gb = vec![0.0; k];
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        gw.iter_mut().zip(&w).for_each(|(g, wi)| *g = cfg.lambda * wi);
        gb.iter_mut().zip(&b).for_each(|(g, bi)| *g = cfg.lambda * bi);
        for (i, &y) in labels.iter().enumerate() {
            let xi = x.row(i);
            let z: Vec<f64> = (0..k).map(|c| b[c] + dot(&w[c * f..(c + 1) * f], xi)).collect();
            let mut r = softmax_slice(&z);
            r[y] -= 1.0;
            for c in 0..k {
                let rc = r[c] * inv_n;
                gb[c] += rc;
                for (g, xv) in gw[c * f..(c + 1) * f].iter_mut().zip(xi) {
                    *g += rc * xv;
                }
            }
        }
        let gmax = gw.iter().chain(&gb).fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax <= cfg.tolerance {
            break;
        }
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= step * g);
        b.iter_mut().zip(&gb).for_each(|(bi, g)| *bi -= step * g);
        iterations += 1;
    }
    Ok(StackingModel {
        weights: Tensor::from_parts(vec![k, f], w),
        bias: Tensor::from_parts(vec![k], b),
        members: members.len(),
        iterations,
    })
}

/// Argmax of the meta model on the members' concatenated probabilities; ties to the lowest class.
pub fn ensemble_stacking(model: &StackingModel, spec: &EnsembleSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let k = spec.members[0].matrix.classes();
    if spec.len() != model.members || k != model.classes() || model.weights.shape() != [k, spec.len() * k] {
        return Err(Error::ShapeMismatch(format!(
            "meta model fitted for {} members × {} classes, ensemble has {} × {k}",
            model.members,
            model.classes(),
            spec.len()
        )));
    }
    let refs: Vec<&LogitMatrix> = spec.members.iter().map(|m| &m.matrix).collect();
    Ok(features(&refs).rows().map(|r| argmax(&model.logits(r))).collect())
}
