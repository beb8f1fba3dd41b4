//! Pair-based Circle loss over a batch of embeddings.

use serde::{Deserialize, Serialize};

use super::{check_labels, LossOutput};
use crate::error::{Error, Result};
use crate::losses::arcface::normalize_rows;
use crate::numerics::log_sum_exp;
use crate::tensor::{dot, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleConfig {
    pub margin: f64,
    pub gamma: f64,
}

impl Default for CircleConfig {
    fn default() -> Self {
        Self { margin: 0.25, gamma: 32.0 }
    }
}

impl CircleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(Error::ConfigInvalid(format!("circle margin {} not in (0, 1)", self.margin)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::ConfigInvalid(format!("circle gamma {} must be positive", self.gamma)));
        }
        Ok(())
    }

    /// Positive optimum `O_p = 1 + m`.
    pub fn opt_pos(&self) -> f64 {
        1.0 + self.margin
    }
    /// Negative optimum `O_n = -m`.
    pub fn opt_neg(&self) -> f64 {
        -self.margin
    }
    /// Positive decision margin `Δ_p = 1 - m`.
    pub fn delta_pos(&self) -> f64 {
        1.0 - self.margin
    }
    /// Negative decision margin `Δ_n = m`.
    pub fn delta_neg(&self) -> f64 {
        self.margin
    }
}

/// Per-pair re-weighting factors α, held fixed during differentiation.
///
/// Stored as a dense `B×B` table; only `i < j` entries are meaningful.
#[derive(Clone, Debug, PartialEq)]
pub struct PairWeights {
    b: usize,
    alpha: Vec<f64>,
}

impl PairWeights {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.alpha[i * self.b + j]
    }
}

fn similarities(emb: &Tensor) -> Result<(usize, usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (b, d) = emb.dims2()?;
    let (xhat, xnorm) = normalize_rows(emb)?;
    let mut sim = vec![0.0; b * b];
    for i in 0..b {
        for j in (i + 1)..b {
            sim[i * b + j] = dot(&xhat[i * d..(i + 1) * d], &xhat[j * d..(j + 1) * d]);
        }
    }
    Ok((b, d, xhat, xnorm, sim))
}

/// α_p = max(0, O_p - s) on same-label pairs, α_n = max(0, s - O_n) otherwise.
pub fn circle_pair_weights(embeddings: &Tensor, labels: &[usize], cfg: &CircleConfig) -> Result<PairWeights> {
    cfg.validate()?;
    let (b, _, _, _, sim) = similarities(embeddings)?;
    check_labels(labels, b, None)?;
    let mut alpha = vec![0.0; b * b];
    for i in 0..b {
        for j in (i + 1)..b {
            let s = sim[i * b + j];
            alpha[i * b + j] = if labels[i] == labels[j] {
                (cfg.opt_pos() - s).max(0.0)
            } else {
                (s - cfg.opt_neg()).max(0.0)
            };
        }
    }
    Ok(PairWeights { b, alpha })
}

/// Circle loss with its α factors evaluated at the current embeddings.
pub fn circle_loss(embeddings: &Tensor, labels: &[usize], cfg: &CircleConfig) -> Result<LossOutput> {
    let weights = circle_pair_weights(embeddings, labels, cfg)?;
    circle_loss_with_weights(embeddings, labels, cfg, &weights)
}

/// `log(1 + Σ_N exp(γ α_n (s_n - Δ_n)) · Σ_P exp(-γ α_p (s_p - Δ_p)))` with α supplied.
///
/// The gradient treats α as constant, so it is the exact gradient of this
/// function for fixed `weights`.
pub fn circle_loss_with_weights(
    embeddings: &Tensor,
    labels: &[usize],
    cfg: &CircleConfig,
    weights: &PairWeights,
) -> Result<LossOutput> {
    cfg.validate()?;
    let (b, d, xhat, xnorm, sim) = similarities(embeddings)?;
    if b == 0 {
        return Err(Error::DataEmpty);
    }
    check_labels(labels, b, None)?;
    if weights.b != b {
        return Err(Error::ShapeMismatch(format!("pair weights for {} rows, batch has {b}", weights.b)));
    }

    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for i in 0..b {
        for j in (i + 1)..b {
            let s = sim[i * b + j];
            let a = weights.get(i, j);
            if labels[i] == labels[j] {
                pos.push((i, j, -cfg.gamma * a * (s - cfg.delta_pos()), -cfg.gamma * a));
            } else {
                neg.push((i, j, cfg.gamma * a * (s - cfg.delta_neg()), cfg.gamma * a));
            }
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Ok(LossOutput::zero_like(Some(embeddings), None));
    }

    let pos_logits: Vec<f64> = pos.iter().map(|p| p.2).collect();
    let neg_logits: Vec<f64> = neg.iter().map(|p| p.2).collect();
    let lse_p = log_sum_exp(&pos_logits);
    let lse_n = log_sum_exp(&neg_logits);
    let z = lse_p + lse_n;
    // softplus(z) and its derivative sigmoid(z), both overflow-safe.
    let value = z.max(0.0) + (-z.abs()).exp().ln_1p();
    let sig = if z >= 0.0 { 1.0 / (1.0 + (-z).exp()) } else { z.exp() / (1.0 + z.exp()) };

    let mut gunit = vec![0.0; b * d];
    for (group, lse) in [(&pos, lse_p), (&neg, lse_n)] {
        for &(i, j, logit, slope) in group.iter() {
            let g = sig * (logit - lse).exp() * slope;
            for t in 0..d {
                gunit[i * d + t] += g * xhat[j * d + t];
                gunit[j * d + t] += g * xhat[i * d + t];
            }
        }
    }
    let mut gx = vec![0.0; b * d];
    for i in 0..b {
        let u = &xhat[i * d..(i + 1) * d];
        let g = &gunit[i * d..(i + 1) * d];
        let radial = dot(g, u);
        for t in 0..d {
            gx[i * d + t] = (g[t] - radial * u[t]) / xnorm[i];
        }
    }
    Ok(LossOutput {
        value,
        grad_embeddings: Some(Tensor::from_parts(vec![b, d], gx)),
        grad_class_weights: None,
        grad_logits: None,
    })
}
