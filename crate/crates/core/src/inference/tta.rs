//! Deterministic test-time views and dataset-level prediction.

use serde::{Deserialize, Serialize};

use super::LogitMatrix;
use crate::augment::{five_crop, flip, resize, rotate, ROTATE_FILL};
use crate::error::{Error, Result};
use crate::io::{Checkpoint, Dataset};
use crate::numerics::softmax_slice;
use crate::tensor::Tensor;
use crate::training::{fit_images, ExperimentConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTAConfig {
    pub test_size: usize,
    pub resize: bool,
    pub five_crop: bool,
    pub hflip: bool,
    pub rotate: bool,
    pub rotate_degrees: f64,
    /// The five crops are cut from a resize to `⌈test_size · crop_source_scale⌉`.
    pub crop_source_scale: f64,
}

impl TTAConfig {
    /// Every view family at the config's test size.
    pub fn full(test_size: usize) -> Self {
        Self {
            test_size,
            resize: true,
            five_crop: true,
            hflip: true,
            rotate: true,
            rotate_degrees: 15.0,
            crop_source_scale: 1.15,
        }
    }

    pub fn for_config(cfg: &ExperimentConfig) -> Self {
        Self::full(cfg.test_size)
    }

    /// The single plain resize view.
    pub fn resize_only(test_size: usize) -> Self {
        Self { five_crop: false, hflip: false, rotate: false, ..Self::full(test_size) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resize || self.five_crop || self.hflip || self.rotate) {
            return Err(Error::ConfigInvalid("no test-time view family enabled".into()));
        }
        if self.test_size == 0 {
            return Err(Error::ConfigInvalid("test size must be positive".into()));
        }
        if !(self.crop_source_scale >= 1.0) || !self.crop_source_scale.is_finite() {
            return Err(Error::ConfigInvalid(format!("crop source scale {} must be >= 1", self.crop_source_scale)));
        }
        if !(self.rotate_degrees.abs() <= 180.0) {
            return Err(Error::OutOfRange { value: self.rotate_degrees, lo: -180.0, hi: 180.0 });
        }
        Ok(())
    }

    /// True when views are smaller than the checkpoint's training input.
    pub fn undersized_for(&self, ckpt: &Checkpoint) -> bool {
        self.test_size < ckpt.input_geometry().1
    }

    pub fn view_count(&self) -> usize {
        usize::from(self.resize) + 5 * usize::from(self.five_crop) + usize::from(self.hflip) + 2 * usize::from(self.rotate)
    }
}

/// Views in fixed order: resize, five crops, flipped resize, rotations `+θ` then `-θ`.
pub fn tta_views(image: &Tensor, cfg: &TTAConfig) -> Result<Vec<Tensor>> {
    cfg.validate()?;
    let t = cfg.test_size;
    let base = resize(image, t, t)?;
    let mut views = Vec::with_capacity(cfg.view_count());
    if cfg.resize {
        views.push(base.clone());
    }
    if cfg.five_crop {
        let src = (t as f64 * cfg.crop_source_scale).ceil() as usize;
        views.extend(five_crop(&resize(image, src, src)?, t)?);
    }
    if cfg.hflip {
        views.push(flip(&base)?);
    }
    if cfg.rotate {
        views.push(rotate(&base, cfg.rotate_degrees, ROTATE_FILL)?);
        views.push(rotate(&base, -cfg.rotate_degrees, ROTATE_FILL)?);
    }
    Ok(views)
}

/// Stacks `C×H×W` views into one `V×C×side×side` batch at the model's input size.
fn view_batch(views: &[Tensor], side: usize) -> Result<Tensor> {
    let shape = views[0].shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut data = Vec::with_capacity(views.len() * c * h * w);
    for v in views {
        data.extend_from_slice(v.data());
    }
    fit_images(&Tensor::from_parts(vec![views.len(), c, h, w], data), side)
}

/// Mean of the per-view softmax distributions.
pub fn tta_predict(ckpt: &Checkpoint, image: &Tensor, cfg: &TTAConfig) -> Result<Vec<f64>> {
    let views = tta_views(image, cfg)?;
    let logits = ckpt.params.predict_logits(&view_batch(&views, ckpt.input_geometry().1)?, ckpt.config.arcface.scale)?;
    let k = ckpt.classes();
    let mut mean = vec![0.0; k];
    for row in logits.rows() {
        for (m, p) in mean.iter_mut().zip(softmax_slice(row)) {
            *m += p;
        }
    }
    let n = views.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Logits for every image, ids `0..N`. Without TTA the rows are the raw
/// margin-free logits; with TTA they are `ln` of the mean view probability.
pub fn predict_dataset(ckpt: &Checkpoint, dataset: &Dataset, tta: Option<&TTAConfig>) -> Result<LogitMatrix> {
    let k = ckpt.classes();
    let ids: Vec<u64> = (0..dataset.len() as u64).collect();
    if dataset.is_empty() {
        return LogitMatrix::new(ids, Tensor::zeros(&[0, k]), ckpt.config.id.clone());
    }
    let logits = match tta {
        None => {
            let images = fit_images(&dataset.images, ckpt.input_geometry().1)?;
            ckpt.params.predict_logits(&images, ckpt.config.arcface.scale)?
        }
        Some(cfg) => {
            let mut data = Vec::with_capacity(dataset.len() * k);
            for i in 0..dataset.len() {
                data.extend(tta_predict(ckpt, &dataset.image(i), cfg)?.into_iter().map(f64::ln));
            }
            Tensor::new(vec![dataset.len(), k], data)?
        }
    };
    LogitMatrix::new(ids, logits, ckpt.config.id.clone())
}
