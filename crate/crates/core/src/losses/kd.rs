//! Temperature-scaled distillation.

use serde::{Deserialize, Serialize};

use super::{cross_entropy, LossOutput};
use crate::error::{Error, Result};
use crate::numerics::log_softmax_slice;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KDConfig {
    pub temperature: f64,
    pub kd_weight: f64,
    pub ce_weight: f64,
}

impl Default for KDConfig {
    fn default() -> Self {
        Self { temperature: 3.0, kd_weight: 1.0, ce_weight: 1.0 }
    }
}

impl KDConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::ConfigInvalid(format!("temperature {} must be positive", self.temperature)));
        }
        if !(self.kd_weight >= 0.0 && self.ce_weight >= 0.0) {
            return Err(Error::ConfigInvalid("distillation weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// `T² · mean_i KL(softmax(z_t/T) ‖ softmax(z_s/T))`; gradient w.r.t. the student only.
pub fn kd_loss(student_logits: &Tensor, teacher_logits: &Tensor, cfg: &KDConfig) -> Result<LossOutput> {
    cfg.validate()?;
    let (b, k) = student_logits.dims2()?;
    if teacher_logits.shape() != student_logits.shape() {
        return Err(Error::ShapeMismatch(format!(
            "student {:?} vs teacher {:?}",
            student_logits.shape(),
            teacher_logits.shape()
        )));
    }
    if b == 0 {
        return Err(Error::DataEmpty);
    }
    let t = cfg.temperature;
    let inv_b = 1.0 / b as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; b * k];
    for i in 0..b {
        let zs: Vec<f64> = student_logits.row(i).iter().map(|v| v / t).collect();
        let zt: Vec<f64> = teacher_logits.row(i).iter().map(|v| v / t).collect();
        let ls = log_softmax_slice(&zs);
        let lt = log_softmax_slice(&zt);
        let mut kl = 0.0;
        for j in 0..k {
            let pt = lt[j].exp();
            kl += pt * (lt[j] - ls[j]);
            grad[i * k + j] = t * (ls[j].exp() - pt) * inv_b;
        }
        value += kl.max(0.0);
    }
    Ok(LossOutput {
        value: t * t * value * inv_b,
        grad_embeddings: None,
        grad_class_weights: None,
        grad_logits: Some(Tensor::from_parts(vec![b, k], grad)),
    })
}

/// `kd_weight·kd_loss + ce_weight·cross_entropy`.
pub fn distill_objective(
    student_logits: &Tensor,
    teacher_logits: &Tensor,
    soft_labels: &Tensor,
    cfg: &KDConfig,
) -> Result<LossOutput> {
    let kd = kd_loss(student_logits, teacher_logits, cfg)?;
    let ce = cross_entropy(student_logits, soft_labels)?;
    let mut grad = kd.grad_logits.expect("kd fills logit grads").scale(cfg.kd_weight);
    grad.add_scaled(ce.grad_logits.as_ref().expect("ce fills logit grads"), cfg.ce_weight)?;
    Ok(LossOutput {
        value: cfg.kd_weight * kd.value + cfg.ce_weight * ce.value,
        grad_embeddings: None,
        grad_class_weights: None,
        grad_logits: Some(grad),
    })
}
