//! `γ₀·ArcFace + γ₁·Circle`.

use serde::{Deserialize, Serialize};

use super::{arcface_loss_mixed, circle_loss_with_weights, circle_pair_weights, ArcFaceConfig, CircleConfig, LossOutput, MixedTargets, PairWeights};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinedLossConfig {
    pub gamma0: f64,
    pub gamma1: f64,
    pub arc: ArcFaceConfig,
    pub circle: CircleConfig,
}

impl CombinedLossConfig {
    /// γ₀ = 1 and γ₁ = 1/β for a configured batch size β.
    pub fn for_batch_size(batch_size: usize) -> Self {
        Self {
            gamma0: 1.0,
            gamma1: 1.0 / batch_size as f64,
            arc: ArcFaceConfig::default(),
            circle: CircleConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 >= 0.0 && self.gamma1 >= 0.0) || (self.gamma0 == 0.0 && self.gamma1 == 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "combined weights ({}, {}) must be non-negative and not both zero",
                self.gamma0, self.gamma1
            )));
        }
        self.arc.validate()?;
        self.circle.validate()
    }
}

pub fn combined_loss(
    embeddings: &Tensor,
    class_weights: &Tensor,
    labels: &[usize],
    cfg: &CombinedLossConfig,
) -> Result<LossOutput> {
    combined_loss_mixed(embeddings, class_weights, &MixedTargets::unmixed(labels), cfg)
}

/// Combined loss with the Circle term's α factors supplied by the caller.
pub fn combined_loss_with_weights(
    embeddings: &Tensor,
    class_weights: &Tensor,
    labels: &[usize],
    cfg: &CombinedLossConfig,
    pair_weights: &PairWeights,
) -> Result<LossOutput> {
    cfg.validate()?;
    let targets = MixedTargets::unmixed(labels);
    let arc = arcface_loss_mixed(embeddings, class_weights, &targets, &cfg.arc)?;
    let circle = circle_loss_with_weights(embeddings, labels, &cfg.circle, pair_weights)?;
    combine(arc, circle, cfg)
}

/// Cutmix form: ArcFace mixes both hard labels, Circle pairs use each row's dominant label.
pub fn combined_loss_mixed(
    embeddings: &Tensor,
    class_weights: &Tensor,
    targets: &MixedTargets,
    cfg: &CombinedLossConfig,
) -> Result<LossOutput> {
    cfg.validate()?;
    let arc = arcface_loss_mixed(embeddings, class_weights, targets, &cfg.arc)?;
    let dominant = targets.dominant();
    let weights = circle_pair_weights(embeddings, &dominant, &cfg.circle)?;
    let circle = circle_loss_with_weights(embeddings, &dominant, &cfg.circle, &weights)?;
    combine(arc, circle, cfg)
}

fn combine(arc: LossOutput, circle: LossOutput, cfg: &CombinedLossConfig) -> Result<LossOutput> {
    let (g0, g1) = (cfg.gamma0, cfg.gamma1);
    let mut grad_emb = arc.grad_embeddings.expect("arcface fills embedding grads").scale(g0);
    grad_emb.add_scaled(circle.grad_embeddings.as_ref().expect("circle fills embedding grads"), g1)?;
    Ok(LossOutput {
        value: g0 * arc.value + g1 * circle.value,
        grad_embeddings: Some(grad_emb),
        grad_class_weights: arc.grad_class_weights.map(|g| g.scale(g0)),
        grad_logits: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{arcface_loss, circle_loss};
    use crate::numerics::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(seed: u64) -> (Tensor, Tensor, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = |n| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let x = Tensor::new(vec![6, 4], r(24)).unwrap();
        let w = Tensor::new(vec![3, 4], r(12)).unwrap();
        (x, w, vec![0, 1, 2, 0, 1, 1])
    }

    #[test]
    fn zero_circle_weight_is_arcface() {
        let (x, w, y) = instance(1);
        let cfg = CombinedLossConfig { gamma1: 0.0, ..CombinedLossConfig::for_batch_size(6) };
        let c = combined_loss(&x, &w, &y, &cfg).unwrap();
        let a = arcface_loss(&x, &w, &y, &cfg.arc).unwrap();
        assert_eq!(c.value, a.value);
        assert_eq!(c.grad_embeddings, a.grad_embeddings);
        assert_eq!(c.grad_class_weights, a.grad_class_weights);
    }

    #[test]
    fn additive_in_components() {
        let (x, w, y) = instance(2);
        let cfg = CombinedLossConfig::for_batch_size(6);
        assert_eq!(cfg.gamma0, 1.0);
        assert_eq!(cfg.gamma1, 1.0 / 6.0);
        let c = combined_loss(&x, &w, &y, &cfg).unwrap().value;
        let a = arcface_loss(&x, &w, &y, &cfg.arc).unwrap().value;
        let l = circle_loss(&x, &y, &cfg.circle).unwrap().value;
        assert!((c - (a + l / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn doubling_weights_doubles_everything() {
        let (x, w, y) = instance(3);
        let cfg = CombinedLossConfig { gamma0: 0.7, gamma1: 0.3, ..CombinedLossConfig::for_batch_size(6) };
        let twice = CombinedLossConfig { gamma0: 1.4, gamma1: 0.6, ..cfg };
        let a = combined_loss(&x, &w, &y, &cfg).unwrap();
        let b = combined_loss(&x, &w, &y, &twice).unwrap();
        assert_eq!(b.value, 2.0 * a.value);
        assert_eq!(b.grad_embeddings.unwrap(), a.grad_embeddings.unwrap().scale(2.0));
        assert_eq!(b.grad_class_weights.unwrap(), a.grad_class_weights.unwrap().scale(2.0));
    }

    #[test]
    fn gradient_matches_fd() {
        for seed in 0..10 {
            let (x, w, y) = instance(100 + seed);
            let cfg = CombinedLossConfig::for_batch_size(6);
            let pw = circle_pair_weights(&x, &y, &cfg.circle).unwrap();
            let out = combined_loss(&x, &w, &y, &cfg).unwrap();
            let rep = grad_check(
                |t| combined_loss_with_weights(t, &w, &y, &cfg, &pw).unwrap().value,
                &x,
                out.grad_embeddings.as_ref().unwrap(),
                1e-5,
            )
            .unwrap();
            assert!(rep.max_rel_error <= 1e-4);
        }
    }

    #[test]
    fn rejects_all_zero_weights() {
        let cfg = CombinedLossConfig { gamma0: 0.0, gamma1: 0.0, ..CombinedLossConfig::for_batch_size(4) };
        assert!(cfg.validate().is_err());
    }
}
