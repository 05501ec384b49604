use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::AugmentSpec;

/// Optimisation recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_peak: f64,
    /// Learning-rate increase per optimiser step.
    pub lr_increment: f64,
    pub seed: u64,
    pub augment: AugmentSpec,
    /// Chance that a given utterance is augmented in a given step.
    pub augment_prob: f64,
    /// Write a checkpoint every this many epochs (0 = final only).
    pub checkpoint_every: usize,
    /// Anneal the kernel-attention temperature linearly from 30 to 1 over
    /// this many epochs (0 = off).
    pub anneal_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            lr_start: 1e-8,
            lr_peak: 1e-3,
            lr_increment: 2e-6,
            seed: 0,
            augment: AugmentSpec::default(),
            augment_prob: 0.6,
            checkpoint_every: 0,
            anneal_epochs: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        if !(self.lr_start >= 0.0) || !(self.lr_increment >= 0.0) || !self.lr_peak.is_finite() {
            return Err(Error::Config("learning rates must be finite and non-negative".into()));
        }
        if self.lr_start > self.lr_peak {
            return Err(Error::Config(format!(
                "lr_start {} exceeds lr_peak {}",
                self.lr_start, self.lr_peak
            )));
        }
        if !(0.0..=1.0).contains(&self.augment_prob) {
            return Err(Error::Config(format!("augment_prob must lie in [0, 1], got {}", self.augment_prob)));
        }
        self.augment.validate()
    }

    /// `min(lr_start + step * lr_increment, lr_peak)`.
    pub fn lr_at(&self, step: usize) -> f64 {
        (self.lr_start + step as f64 * self.lr_increment).min(self.lr_peak)
    }

    /// Kernel-attention temperature used during `epoch` (0-based).
    pub fn temperature_at(&self, epoch: usize, base: f64) -> f64 {
        if self.anneal_epochs == 0 || epoch >= self.anneal_epochs {
            base
        } else {
            30.0 - 29.0 * epoch as f64 / self.anneal_epochs as f64
        }
    }
}
