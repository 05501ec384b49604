//! Segment cropping, spectro-temporal masking and additive noise.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::AugmentSpec;
use super::wav::Utterance;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

fn dims(feats: &Tensor, what: &str) -> Result<(usize, usize)> {
    match feats.shape() {
        [f, t] => Ok((*f, *t)),
        s => Err(Error::Dimension(format!("{what} expects [n_mels, T], got {s:?}"))),
    }
}

/// Fixed-length window of `segment_frames` frames.
///
/// Longer inputs get a uniform random start, shorter inputs are tiled from the
/// beginning, equal lengths are returned as is (no draw is made).
pub fn crop_segment<R: Rng + ?Sized>(feats: &Tensor, segment_frames: usize, rng: &mut R) -> Result<Tensor> {
    let (rows, len) = dims(feats, "crop_segment")?;
    if len == 0 || segment_frames == 0 {
        return Err(Error::Input("crop_segment: empty input or segment".into()));
    }
    let start = if len > segment_frames { rng.random_range(0..=len - segment_frames) } else { 0 };
    let src = feats.data();
    let mut out = Vec::with_capacity(rows * segment_frames);
    for r in 0..rows {
        let row = &src[r * len..(r + 1) * len];
        out.extend((0..segment_frames).map(|t| row[(start + t) % len]));
    }
    Tensor::from_vec(out, &[rows, segment_frames])
}

/// A masked rectangle: rows `[row, row + height)` by frames `[col, col + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskRect {
    pub row: usize,
    pub height: usize,
    pub col: usize,
    pub width: usize,
}

/// Applies `spec.freq_masks` frequency masks and then `spec.time_masks` time
/// masks, filling with the mean of the whole input.
///
/// Each mask draws its width uniformly from `0..=max` (max clamped to the axis
/// extent) and then its start uniformly from `0..=extent - width`.
/// `spec.kinds` is not consulted here; callers pick which masks to request.
pub fn spec_augment<R: Rng + ?Sized>(feats: &Tensor, spec: &AugmentSpec, rng: &mut R) -> Result<(Tensor, Vec<MaskRect>)> {
    let (rows, len) = dims(feats, "spec_augment")?;
    let mut v = feats.to_vec();
    let fill = v.iter().sum::<f64>() / v.len().max(1) as f64;
    let mut rects = Vec::with_capacity(spec.freq_masks + spec.time_masks);
    for _ in 0..spec.freq_masks {
        let h = rng.random_range(0..=spec.freq_mask_width.min(rows));
        let r0 = rng.random_range(0..=rows - h);
        rects.push(MaskRect { row: r0, height: h, col: 0, width: len });
    }
    for _ in 0..spec.time_masks {
        let w = rng.random_range(0..=spec.time_mask_width.min(len));
        let c0 = rng.random_range(0..=len - w);
        rects.push(MaskRect { row: 0, height: rows, col: c0, width: w });
    }
    for m in &rects {
        for r in m.row..m.row + m.height {
            v[r * len + m.col..r * len + m.col + m.width].fill(fill);
        }
    }
    Ok((Tensor::from_vec(v, &[rows, len])?, rects))
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// Adds white Gaussian noise scaled so the signal-to-noise power ratio is
/// exactly `snr_db`. `+inf` disables the noise; silent input is returned
/// unchanged with a warning.
pub fn add_noise<R: Rng + ?Sized>(utt: &Utterance, snr_db: f64, rng: &mut R) -> Result<Utterance> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::Config(format!("snr_db must be finite or +inf, got {snr_db}")));
    }
    if snr_db == f64::INFINITY {
        return Ok(utt.clone());
    }
    let ps = power(&utt.samples);
    if ps == 0.0 {
        log::warn!("add_noise: {} is silent, left unchanged", utt.utterance_id);
        return Ok(utt.clone());
    }
    let noise: Vec<f64> = (0..utt.samples.len()).map(|_| StandardNormal.sample(rng)).collect();
    let pn = power(&noise);
    if pn == 0.0 {
        return Ok(utt.clone());
    }
    let gain = (ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = utt.samples.iter().zip(&noise).map(|(s, n)| s + gain * n).collect();
    Ok(Utterance {
        samples,
        ..utt.clone()
    })
}
