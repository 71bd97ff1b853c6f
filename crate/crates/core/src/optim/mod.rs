//! Losses, learning-rate schedule and optimizer.

mod loss;
mod schedule;
mod sgd;

pub use loss::{composite_loss, dice_loss, downsample_labels, focal_loss, one_hot};
pub use schedule::lr_at;
pub use sgd::{sgd_nesterov_step, SgdNesterov};

use crate::error::{config_err, Result};

/// Optimisation hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub momentum: f64,
    pub batch_size: usize,
    /// Per-output loss weights, main head first. Sums to 1.
    pub ds_weights: Vec<f64>,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    pub dice_smooth: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 7e-3,
            warmup_steps: 1000,
            total_steps: 72000,
            momentum: 0.99,
            batch_size: 2,
            ds_weights: default_ds_weights(3),
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            dice_smooth: 1e-5,
        }
    }
}

/// Weights proportional to `1, 1/2, 1/4, ...` for `outputs` heads, normalised.
pub fn default_ds_weights(outputs: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..outputs).map(|i| 0.5f64.powi(i as i32)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / s).collect()
}

/// Scales non-negative weights to sum to 1.
pub fn normalize_weights(w: &[f64]) -> Result<Vec<f64>> {
    if w.is_empty() || w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(config_err!("ds_weights must be a non-empty list of non-negative numbers"));
    }
    let s: f64 = w.iter().sum();
    if s <= 0.0 {
        return Err(config_err!("ds_weights must not all be zero"));
    }
    Ok(w.iter().map(|x| x / s).collect())
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps >= self.total_steps {
            return Err(config_err!(
                "warmup_steps ({}) must be less than total_steps ({})",
                self.warmup_steps,
                self.total_steps
            ));
        }
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return Err(config_err!("base_lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(config_err!("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(config_err!("batch_size must be positive"));
        }
        let s: f64 = self.ds_weights.iter().sum();
        if self.ds_weights.is_empty() || (s - 1.0).abs() > 1e-9 || self.ds_weights.iter().any(|&w| w < 0.0) {
            return Err(config_err!("ds_weights must be non-negative and sum to 1"));
        }
        if !(self.focal_gamma >= 0.0) || !(self.focal_alpha > 0.0) || !(self.dice_smooth >= 0.0) {
            return Err(config_err!("focal_gamma >= 0, focal_alpha > 0 and dice_smooth >= 0 required"));
        }
        Ok(())
    }
}
