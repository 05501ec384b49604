//! Log-mel filterbank features.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::config::FeatureConfig;
use super::wav::Utterance;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const LOG_FLOOR: f64 = 1e-10;
const CMVN_EPS: f64 = 1e-8;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the power-spectrum bins `0..=fft_size/2`.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `weights[m][k]`: gain of filter `m` on FFT bin `k`.
    pub weights: Vec<Vec<f64>>,
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let n_bins = cfg.fft_size / 2 + 1;
        let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
        let weights = (0..cfg.n_mels)
            .map(|m| {
                let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            weights,
            centers_hz: edges[1..=cfg.n_mels].to_vec(),
        })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }
}

/// Reusable framing, FFT plan and filterbank for one [`FeatureConfig`].
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    bank: MelFilterbank,
}

impl std::fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureExtractor").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl FeatureExtractor {
    pub fn new(cfg: &FeatureConfig) -> Result<Self> {
        let bank = MelFilterbank::new(cfg)?;
        let win = cfg.win_samples();
        // periodic Hann
        let window = (0..win).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / win as f64).cos()).collect();
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            cfg: cfg.clone(),
            window,
            fft,
            bank,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    pub fn n_frames(&self, n_samples: usize) -> Option<usize> {
        let win = self.cfg.win_samples();
        (n_samples >= win).then(|| 1 + (n_samples - win) / self.cfg.hop_samples())
    }

    /// `[n_mels, T]` natural-log mel energies.
    pub fn log_mel(&self, samples: &[f64]) -> Result<Tensor> {
        let win = self.cfg.win_samples();
        let hop = self.cfg.hop_samples();
        let frames = self.n_frames(samples.len()).ok_or_else(|| {
            Error::Input(format!("waveform of {} samples is shorter than one {win}-sample window", samples.len()))
        })?;
        let n_mels = self.bank.n_mels();
        let n_bins = self.cfg.fft_size / 2 + 1;
        let mut out = vec![0.0; n_mels * frames];
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.fft_size];
        let mut power = vec![0.0; n_bins];
        for t in 0..frames {
            let frame = &samples[t * hop..t * hop + win];
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, (s, w)) in frame.iter().zip(&self.window).enumerate() {
                buf[i].re = s * w;
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for (m, filt) in self.bank.weights.iter().enumerate() {
                let e: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
                out[m * frames + t] = e.max(LOG_FLOOR).ln();
            }
        }
        Tensor::from_vec(out, &[n_mels, frames])
    }

    /// Log-mel, then per-utterance normalisation if the config asks for it.
    pub fn features(&self, samples: &[f64]) -> Result<Tensor> {
        let feats = self.log_mel(samples)?;
        if self.cfg.normalize {
            cmvn_freq(&feats)
        } else {
            Ok(feats)
        }
    }
}

pub fn log_mel(utt: &Utterance, cfg: &FeatureConfig) -> Result<Tensor> {
    FeatureExtractor::new(cfg)?.log_mel(&utt.samples)
}

/// Zero mean, unit variance along time for every mel row.
pub fn cmvn_freq(feats: &Tensor) -> Result<Tensor> {
    let (rows, len) = match feats.shape() {
        [r, t] => (*r, *t),
        s => return Err(Error::Dimension(format!("cmvn_freq expects [n_mels, T], got {s:?}"))),
    };
    if len < 2 {
        return Err(Error::Input(format!("cmvn_freq needs at least 2 frames, got {len}")));
    }
    let mut v = feats.to_vec();
    for row in v.chunks_mut(len) {
        let mean = row.iter().sum::<f64>() / len as f64;
        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / len as f64;
        let inv = 1.0 / (var + CMVN_EPS).sqrt();
        row.iter_mut().for_each(|x| *x = (*x - mean) * inv);
    }
    Tensor::from_vec(v, &[rows, len])
}
