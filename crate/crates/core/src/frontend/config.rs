use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// DSP frontend settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub segment_frames: usize,
    /// Per-utterance mean and variance normalisation of every mel band.
    pub normalize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            win_ms: 25.0,
            hop_ms: 10.0,
            fft_size: 512,
            n_mels: 80,
            fmin: 20.0,
            fmax: 7600.0,
            segment_frames: 300,
            normalize: true,
        }
    }
}

impl FeatureConfig {
    pub fn win_samples(&self) -> usize {
        (self.sample_rate as f64 * self.win_ms / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.sample_rate as f64 * self.hop_ms / 1000.0).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.win_samples() == 0 || self.hop_samples() == 0 {
            return Err(Error::Config("window and hop must be at least one sample".into()));
        }
        if self.fft_size < self.win_samples() {
            return Err(Error::Config(format!(
                "fft_size {} is shorter than the {}-sample window",
                self.fft_size,
                self.win_samples()
            )));
        }
        if self.fmax > self.sample_rate as f64 / 2.0 || self.fmin < 0.0 || self.fmin >= self.fmax {
            return Err(Error::Config(format!(
                "mel range [{}, {}] must lie inside [0, {}]",
                self.fmin,
                self.fmax,
                self.sample_rate / 2
            )));
        }
        if self.n_mels < 2 {
            return Err(Error::Config("n_mels must be at least 2".into()));
        }
        if self.segment_frames == 0 {
            return Err(Error::Config("segment_frames must be positive".into()));
        }
        Ok(())
    }
}

/// Which augmentations may be drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    FreqMask,
    TimeMask,
    Noise,
}

/// Masking and additive-noise augmentation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSpec {
    pub freq_masks: usize,
    pub freq_mask_width: usize,
    pub time_masks: usize,
    pub time_mask_width: usize,
    /// Inclusive SNR range in dB for additive noise.
    pub noise_snr_db: (f64, f64),
    pub kinds: Vec<AugmentKind>,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            freq_masks: 1,
            freq_mask_width: 8,
            time_masks: 1,
            time_mask_width: 20,
            noise_snr_db: (5.0, 20.0),
            kinds: vec![AugmentKind::FreqMask, AugmentKind::TimeMask, AugmentKind::Noise],
        }
    }
}

impl AugmentSpec {
    /// No augmentation at all.
    pub fn none() -> Self {
        Self {
            freq_masks: 0,
            time_masks: 0,
            kinds: Vec::new(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.noise_snr_db;
        if self.kinds.contains(&AugmentKind::Noise) && !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!("noise SNR range ({lo}, {hi}) is invalid")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_400_sample_window_and_160_hop() {
        let cfg = FeatureConfig::default();
        assert_eq!(cfg.win_samples(), 400);
        assert_eq!(cfg.hop_samples(), 160);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_inconsistent_settings() {
        let short_fft = FeatureConfig { fft_size: 256, ..Default::default() };
        assert!(short_fft.validate().is_err());
        let above_nyquist = FeatureConfig { fmax: 9000.0, ..Default::default() };
        assert!(above_nyquist.validate().is_err());
        let one_band = FeatureConfig { n_mels: 1, ..Default::default() };
        assert!(one_band.validate().is_err());
    }
}
