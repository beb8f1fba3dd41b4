//! Test-time augmentation, per-dataset logits, ensemble combiners and top-1 scoring.

mod ensemble;
mod stacking;
mod tta;

pub use ensemble::{ensemble_logit_sum, ensemble_vote, weight_for_score, EnsembleMember, EnsembleMethod, EnsembleSpec};
pub use stacking::{ensemble_stacking, fit_stacking, StackingConfig, StackingModel};
pub use tta::{predict_dataset, tta_predict, tta_views, TTAConfig};

use crate::error::{Error, Result};
use crate::numerics::softmax_slice;
use crate::tensor::{argmax, Tensor};

/// Per-image class scores for one model, rows ordered by ascending image id.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitMatrix {
    image_ids: Vec<u64>,
    logits: Tensor,
    pub model_tag: String,
}

impl LogitMatrix {
    pub fn new(image_ids: Vec<u64>, logits: Tensor, model_tag: impl Into<String>) -> Result<Self> {
        let (n, _) = logits.dims2()?;
        if n != image_ids.len() {
            return Err(Error::LengthMismatch { left: image_ids.len(), right: n });
        }
        if image_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ShapeMismatch("image ids must be unique and ascending".into()));
        }
        Ok(Self { image_ids, logits, model_tag: model_tag.into() })
    }

    pub fn image_ids(&self) -> &[u64] {
        &self.image_ids
    }

    pub fn logits(&self) -> &Tensor {
        &self.logits
    }

    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.logits.shape()[1]
    }

    /// Row argmax, ties to the lowest class index.
    pub fn predictions(&self) -> Vec<usize> {
        self.logits.rows().map(argmax).collect()
    }

    /// Row-wise softmax.
    pub fn probabilities(&self) -> Tensor {
        let data = self.logits.rows().flat_map(softmax_slice).collect();
        Tensor::from_parts(self.logits.shape().to_vec(), data)
    }
}

/// Fraction of exact matches.
pub fn top1_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: labels.len() });
    }
    if labels.is_empty() {
        return Err(Error::DataEmpty);
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}
