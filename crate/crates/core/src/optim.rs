//! Plain SGD machinery shared by the NAT model and the toy teacher.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Problems, Result};
use crate::seed;

/// Optimization and model-shape settings for the toy models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Total SGD steps; also the horizon of the imitation-rate schedule.
    pub steps: usize,
    pub lr: f64,
    /// Linear warmup length; afterwards the rate decays as `1/sqrt(step)`.
    pub warmup: usize,
    pub inverse_sqrt: bool,
    /// Sentence pairs per batch.
    pub batch_size: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip: f64,
    pub seed: u64,
    /// Floor applied to every output distribution.
    pub floor: f64,
    pub dim: usize,
    /// Length offsets are predicted in `[-max_offset, +max_offset]`.
    pub max_offset: usize,
    pub max_positions: usize,
    pub init_scale: f64,
    /// Clamp the imitation rate to [0, 1].
    pub schedule_clamp: bool,
    /// Overrides the imitation-rate schedule with a constant.
    pub fixed_lambda: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            lr: 0.5,
            warmup: 1,
            inverse_sqrt: true,
            batch_size: 32,
            clip: 5.0,
            seed: 1,
            floor: 1e-9,
            dim: 32,
            max_offset: 4,
            max_positions: 64,
            init_scale: 0.1,
            schedule_clamp: true,
            fixed_lambda: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut p = Problems::new();
        p.check(self.lr > 0.0, || "lr must be positive".into());
        p.check(self.batch_size > 0, || "batch_size must be positive".into());
        p.check(self.dim > 0, || "dim must be positive".into());
        p.check(self.max_positions > 0, || "max_positions must be positive".into());
        p.check(self.clip >= 0.0, || "clip must be >= 0".into());
        p.check(self.floor >= 0.0 && self.floor < 1e-3, || "floor must lie in [0, 1e-3)".into());
        p.check(self.init_scale >= 0.0, || "init_scale must be >= 0".into());
        if let Some(l) = self.fixed_lambda {
            p.check((0.0..=1.0).contains(&l), || "fixed_lambda must lie in [0, 1]".into());
        }
        p.into_result()
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        let s = (step + 1) as f64;
        let warmup = self.warmup.max(1) as f64;
        let warm = (s / warmup).min(1.0);
        let decay = if self.inverse_sqrt && s > warmup { (warmup / s).sqrt() } else { 1.0 };
        self.lr * warm * decay
    }
}

/// Cycles through seeded permutations of `0..n`, one epoch at a time.
pub struct EpochBatcher {
    order: Vec<usize>,
    cursor: usize,
    rng: seed::Rng,
}

impl EpochBatcher {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut b = EpochBatcher { order: (0..n).collect(), cursor: 0, rng: seed::rng(seed) };
        b.order.shuffle(&mut b.rng);
        b
    }

    pub fn next_index(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        (0..size).map(|_| self.next_index()).collect()
    }
}

/// Factor that rescales a gradient of squared norm `sq_norm` to at most `clip`.
pub fn clip_factor(sq_norm: f64, clip: f64) -> f64 {
    let norm = sq_norm.sqrt();
    if clip > 0.0 && norm > clip {
        clip / norm
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_then_inverse_sqrt() {
        let cfg = TrainConfig { lr: 1.0, warmup: 4, ..TrainConfig::default() };
        assert_eq!(cfg.lr_at(0), 0.25);
        assert_eq!(cfg.lr_at(3), 1.0);
        assert!((cfg.lr_at(15) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn batcher_covers_each_epoch() {
        let mut b = EpochBatcher::new(10, 3);
        let mut first: Vec<usize> = b.next_batch(10);
        first.sort_unstable();
        assert_eq!(first, (0..10).collect::<Vec<_>>());
    }
}
