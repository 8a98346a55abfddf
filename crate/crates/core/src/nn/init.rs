//! Weight initialization.

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Glorot-normal draws: zero mean, variance 2 / (fan_in + fan_out).
pub fn xavier_init<R: Rng>(fan_in: usize, fan_out: usize, count: usize, rng: &mut R) -> Vec<f64> {
    assert!(fan_in > 0 && fan_out > 0, "fans must be positive");
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("positive std");
    (0..count).map(|_| dist.sample(rng)).collect()
}
