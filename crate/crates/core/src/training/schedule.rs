use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub lr_max: f64,
    pub lr_min: f64,
    /// Annealing period in epochs, set to the run's epoch count.
    pub t_max: usize,
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_max >= self.lr_min && self.lr_min >= 0.0) || self.t_max == 0 {
            return Err(Error::ConfigInvalid(format!(
                "scheduler needs lr_max >= lr_min >= 0 and t_max >= 1, got {:?}",
                self
            )));
        }
        Ok(())
    }
}

/// `lr_min + ½(lr_max − lr_min)(1 + cos(π·epoch/T_max))`.
pub fn cosine_lr(epoch: usize, cfg: &SchedulerConfig) -> Result<f64> {
    cfg.validate()?;
    if epoch > cfg.t_max {
        return Err(Error::OutOfRange { value: epoch as f64, lo: 0.0, hi: cfg.t_max as f64 });
    }
    // Exact endpoints, independent of cos(π) rounding.
    if epoch == 0 {
        return Ok(cfg.lr_max);
    }
    if epoch == cfg.t_max {
        return Ok(cfg.lr_min);
    }
    let phase = std::f64::consts::PI * epoch as f64 / cfg.t_max as f64;
    Ok(cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + phase.cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CFG: SchedulerConfig = SchedulerConfig { lr_max: 0.2, lr_min: 0.01, t_max: 30 };

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0, &CFG).unwrap(), 0.2);
        assert_eq!(cosine_lr(30, &CFG).unwrap(), 0.01);
        assert!((cosine_lr(15, &CFG).unwrap() - 0.105).abs() < 1e-15);
        assert!(matches!(cosine_lr(31, &CFG), Err(Error::OutOfRange { .. })));
    }

    proptest! {
        #[test]
        fn non_increasing(t in 1usize..200, lo in 0.0f64..1.0, span in 0.0f64..1.0) {
            let cfg = SchedulerConfig { lr_max: lo + span, lr_min: lo, t_max: t };
            let lrs: Vec<f64> = (0..=t).map(|e| cosine_lr(e, &cfg).unwrap()).collect();
            prop_assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
