//! Training objectives with hand-derived gradients.
//!
//! Every loss reports a batch scalar plus the gradients that apply to it:
//! embedding-space losses fill `grad_embeddings` (and `grad_class_weights`
//! when a classification head is involved), logit-space losses fill
//! `grad_logits`.

pub(crate) mod arcface;
mod ce;
mod circle;
mod combined;
mod kd;

pub use arcface::{arcface_logits, arcface_loss, arcface_loss_mixed, ArcFaceConfig};
pub use ce::cross_entropy;
pub use circle::{circle_loss, circle_loss_with_weights, circle_pair_weights, CircleConfig, PairWeights};
pub use combined::{
    combined_loss, combined_loss_mixed, combined_loss_with_weights, CombinedLossConfig,
};
pub use kd::{distill_objective, kd_loss, KDConfig};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct LossOutput {
    pub value: f64,
    pub grad_embeddings: Option<Tensor>,
    pub grad_class_weights: Option<Tensor>,
    pub grad_logits: Option<Tensor>,
}

impl LossOutput {
    pub(crate) fn zero_like(emb: Option<&Tensor>, class_weights: Option<&Tensor>) -> Self {
        Self {
            value: 0.0,
            grad_embeddings: emb.map(|t| Tensor::zeros(t.shape())),
            grad_class_weights: class_weights.map(|t| Tensor::zeros(t.shape())),
            grad_logits: None,
        }
    }
}

/// Hard targets for a cutmix batch: row `i` is `lambdas[i]` parts `labels[i]`
/// and `1 - lambdas[i]` parts `partners[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedTargets {
    pub labels: Vec<usize>,
    pub partners: Vec<usize>,
    pub lambdas: Vec<f64>,
}

impl MixedTargets {
    pub fn unmixed(labels: &[usize]) -> Self {
        Self {
            labels: labels.to_vec(),
            partners: labels.to_vec(),
            lambdas: vec![1.0; labels.len()],
        }
    }

    /// Label carrying the larger share of each row; ties go to the row's own label.
    pub fn dominant(&self) -> Vec<usize> {
        self.labels
            .iter()
            .zip(&self.partners)
            .zip(&self.lambdas)
            .map(|((&a, &b), &l)| if l >= 0.5 { a } else { b })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub(crate) fn check_labels(labels: &[usize], rows: usize, classes: Option<usize>) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::LengthMismatch { left: labels.len(), right: rows });
    }
    if let Some(k) = classes {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange { label: bad, classes: k });
        }
    }
    Ok(())
}

/// Mean hard-label cross-entropy with optional per-row weights.
/// Returns the value and `d value / d logits`.
pub(crate) fn hard_ce(logits: &[f64], k: usize, labels: &[usize], row_weights: Option<&[f64]>) -> (f64, Vec<f64>) {
    let b = labels.len();
    let inv_b = 1.0 / b as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; b * k];
    for (i, &y) in labels.iter().enumerate() {
        let w = row_weights.map_or(1.0, |r| r[i]);
        let row = &logits[i * k..(i + 1) * k];
        let lp = crate::numerics::log_softmax_slice(row);
        value += -w * lp[y];
        let g = &mut grad[i * k..(i + 1) * k];
        for (gj, &l) in g.iter_mut().zip(&lp) {
            *gj = w * l.exp() * inv_b;
        }
        g[y] -= w * inv_b;
    }
    (value * inv_b, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &Tensor, b: &Tensor) -> bool {
        a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0))
    }

    fn permuted(t: &Tensor, perm: &[usize]) -> Tensor {
        t.select_rows(perm)
    }

    proptest! {
        #[test]
        fn batch_losses_are_permutation_equivariant(
            x in prop::collection::vec(-1.0f64..1.0, 6 * 4),
            w in prop::collection::vec(-1.0f64..1.0, 3 * 4),
            labels in prop::collection::vec(0usize..3, 6),
            perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
        ) {
            let x = Tensor::new(vec![6, 4], x).unwrap();
            let w = Tensor::new(vec![3, 4], w).unwrap();
            prop_assume!(x.rows().chain(w.rows()).all(|r| r.iter().map(|v| v * v).sum::<f64>() > 1e-6));
            let px = permuted(&x, &perm);
            let pl: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
            let cfg = CombinedLossConfig::for_batch_size(6);

            let a = combined_loss(&x, &w, &labels, &cfg).unwrap();
            let b = combined_loss(&px, &w, &pl, &cfg).unwrap();
            prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1.0));
            prop_assert!(close(&permuted(a.grad_embeddings.as_ref().unwrap(), &perm), b.grad_embeddings.as_ref().unwrap()));
            prop_assert!(close(a.grad_class_weights.as_ref().unwrap(), b.grad_class_weights.as_ref().unwrap()));

            let logits = Tensor::new(vec![6, 3], x.data()[..18].to_vec()).unwrap();
            let mut soft = Tensor::zeros(&[6, 3]);
            for (i, &y) in labels.iter().enumerate() {
                soft.row_mut(i)[y] = 1.0;
            }
            let ce = cross_entropy(&logits, &soft).unwrap();
            let pce = cross_entropy(&permuted(&logits, &perm), &permuted(&soft, &perm)).unwrap();
            prop_assert!((ce.value - pce.value).abs() <= 1e-12 * ce.value.abs().max(1.0));
            prop_assert!(close(&permuted(ce.grad_logits.as_ref().unwrap(), &perm), pce.grad_logits.as_ref().unwrap()));
        }
    }
}
