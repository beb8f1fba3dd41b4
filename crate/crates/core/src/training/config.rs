//! Experiment recipes, including the two preset configurations.

use serde::{Deserialize, Serialize};

use super::schedule::SchedulerConfig;
use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::losses::{ArcFaceConfig, CircleConfig, CombinedLossConfig, KDConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Softmax cross-entropy on the margin-free cosine head.
    Ce,
    Arcface,
    /// ArcFace plus batch Circle loss.
    Combined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    /// Model input side length in pixels; train-time crops are resized to it.
    pub train_size: usize,
    /// Side length of test-time views before they are fitted to the model input.
    pub test_size: usize,
    pub loss: LossKind,
    pub augment: AugmentConfig,
    pub arcface: ArcFaceConfig,
    pub circle: CircleConfig,
    pub gamma0: f64,
    /// Circle weight; `None` means `1 / batch_size`.
    pub gamma1: Option<f64>,
    pub kd: KDConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub momentum: f64,
    /// Layer widths after the flattened input; the last one is the embedding size.
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub channels: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Smaller train/test sizes with cutmix, ArcFace loss.
    pub fn config_a() -> Self {
        Self {
            id: "config-a".into(),
            train_size: 20,
            test_size: 24,
            loss: LossKind::Arcface,
            augment: AugmentConfig { cutmix_enabled: true, ..AugmentConfig::default() },
            ..Self::config_b()
        }
    }

    /// Larger train/test sizes without cutmix, combined loss.
    pub fn config_b() -> Self {
        Self {
            id: "config-b".into(),
            train_size: 24,
            test_size: 32,
            loss: LossKind::Combined,
            augment: AugmentConfig::default(),
            arcface: ArcFaceConfig::default(),
            circle: CircleConfig::default(),
            gamma0: 1.0,
            gamma1: None,
            kd: KDConfig::default(),
            batch_size: 32,
            epochs: 30,
            lr_max: 0.01,
            lr_min: 0.0,
            momentum: 0.9,
            hidden: vec![64, 32],
            classes: 20,
            channels: 3,
            seed: 0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "config-a" => Some(Self::config_a()),
            "config-b" => Some(Self::config_b()),
            _ => None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.channels * self.train_size * self.train_size
    }

    /// Full width list for the model: flattened input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(&self.hidden);
        w
    }

    pub fn combined(&self) -> CombinedLossConfig {
        CombinedLossConfig {
            gamma0: self.gamma0,
            gamma1: self.gamma1.unwrap_or(1.0 / self.batch_size as f64),
            arc: self.arcface,
            circle: self.circle,
        }
    }

    pub fn scheduler(&self) -> SchedulerConfig {
        SchedulerConfig { lr_max: self.lr_max, lr_min: self.lr_min, t_max: self.epochs.max(1) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.train_size == 0 || self.test_size == 0 {
            return bad("train and test sizes must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden widths {:?} must be non-empty and positive", self.hidden));
        }
        if self.classes < 2 || self.channels == 0 {
            return bad("need at least two classes and one channel".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} not in [0, 1)", self.momentum));
        }
        self.scheduler().validate()?;
        self.augment.validate()?;
        self.arcface.validate()?;
        self.kd.validate()?;
        if self.loss == LossKind::Combined {
            self.combined().validate()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
