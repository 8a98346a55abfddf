//! Training hyperparameters, the learning-rate schedule, and plain SGD with
//! L2 weight decay.

use crate::error::{CoreError, Result};

/// Hyperparameters of the training recipe: L2 loss, SGD with weight decay
/// 1e-4, learning rate falling geometrically from 1e-3 to 1e-5 over 200
/// epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_start: f64,
    pub lr_end: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_start: 1e-3,
            lr_end: 1e-5,
            weight_decay: 1e-4,
            epochs: 200,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_start > self.lr_end && self.lr_end > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "need lr_start > lr_end > 0, got {} / {}",
                self.lr_start, self.lr_end
            )));
        }
        if self.epochs == 0 {
            return Err(CoreError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(CoreError::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    /// Learning rate at a (possibly fractional) epoch index: geometric
    /// interpolation from `lr_start` at epoch 0 to `lr_end` at the last
    /// epoch.
    pub fn lr_at(&self, epoch: f64) -> f64 {
        if self.epochs <= 1 {
            return self.lr_start;
        }
        let t = epoch / (self.epochs as f64 - 1.0);
        self.lr_start * (self.lr_end / self.lr_start).powf(t)
    }
}

/// One SGD step with decoupled-from-nothing classic L2 decay:
/// `p <- p - lr * (g + weight_decay * p)`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64) {
    debug_assert_eq!(params.len(), grads.len());
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= lr * (g + weight_decay * *p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(0.0), 1e-3);
        assert!((cfg.lr_at(199.0) - 1e-5).abs() < 1e-18);
        // Geometric midpoint of the 200-epoch schedule.
        assert!((cfg.lr_at(99.5) - 1e-4).abs() < 1e-16);
        let one = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        assert_eq!(one.lr_at(0.0), 1e-3);
    }

    #[test]
    fn sgd_examples() {
        let mut p = vec![1.0, -2.0];
        sgd_step(&mut p, &[0.0, 0.0], 0.5, 0.0);
        assert_eq!(p, vec![1.0, -2.0]);

        let mut p = vec![1.0];
        sgd_step(&mut p, &[0.0], 1e-3, 1e-4);
        assert!((p[0] - (1.0 - 1e-7)).abs() < 1e-18);

        // One step on f(p) = p^2 / 2 from p = 1 with lr 0.1: gradient is p.
        let mut p = vec![1.0];
        let g = vec![p[0]];
        sgd_step(&mut p, &g, 0.1, 0.0);
        assert!((p[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            lr_end: 2e-3,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
