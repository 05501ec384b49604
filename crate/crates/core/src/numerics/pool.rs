//! Weighted first and second moments over time.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Per-row weighted mean and standard deviation over the last axis.
///
/// `h` and `weights` are both `[B, C, T]`; the result is `[B, 2C]` laid out
/// as `[mean_0..mean_C, std_0..std_C]` per batch element. The variance is
/// clamped at zero before the square root and the clamp has zero gradient.
pub fn weighted_moments(h: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let (batch, channels, len) = match h.shape() {
        [b, c, t] => (*b, *c, *t),
        s => return Err(Error::Dimension(format!("weighted_moments: expected [B, C, T], got {s:?}"))),
    };
    if weights.shape() != h.shape() {
        return Err(Error::Dimension(format!(
            "weighted_moments: weights {:?} vs features {:?}",
            weights.shape(),
            h.shape()
        )));
    }
    let hv = h.to_vec();
    let wv = weights.to_vec();
    let mut out = vec![0.0; batch * 2 * channels];
    for b in 0..batch {
        for c in 0..channels {
            let row = (b * channels + c) * len;
            let (mut mu, mut m2) = (0.0, 0.0);
            for t in row..row + len {
                mu += wv[t] * hv[t];
                m2 += wv[t] * hv[t] * hv[t];
            }
            out[b * 2 * channels + c] = mu;
            out[b * 2 * channels + channels + c] = (m2 - mu * mu).max(0.0).sqrt();
        }
    }
    let saved = out.clone();
    let needs = [h.requires_grad(), weights.requires_grad()];
    Ok(Tensor::from_op(
        vec![batch, 2 * channels],
        out,
        "weighted_moments",
        vec![h.clone(), weights.clone()],
        move |g| {
            let mut gh = vec![0.0; hv.len()];
            let mut gw = vec![0.0; wv.len()];
            for b in 0..batch {
                for c in 0..channels {
                    let row = (b * channels + c) * len;
                    let mu = saved[b * 2 * channels + c];
                    let sigma = saved[b * 2 * channels + channels + c];
                    let g_mu = g[b * 2 * channels + c];
                    let g_sigma = if sigma > 0.0 { g[b * 2 * channels + channels + c] / sigma } else { 0.0 };
                    for t in row..row + len {
                        // d sigma / d h = w (h - mu) / sigma;  d sigma / d w = (h^2 - 2 mu h) / (2 sigma)
                        gh[t] = wv[t] * (g_mu + g_sigma * (hv[t] - mu));
                        gw[t] = g_mu * hv[t] + g_sigma * 0.5 * (hv[t] * hv[t] - 2.0 * mu * hv[t]);
                    }
                }
            }
            vec![needs[0].then_some(gh), needs[1].then_some(gw)]
        },
    ))
}

/// Weighted mean and standard deviation of each row of `h: [C, T]` under a
/// single weight vector `weights: [T]` on the probability simplex.
pub fn stat_pool_moments(h: &Tensor, weights: &Tensor) -> Result<(Tensor, Tensor)> {
    let (channels, len) = match h.shape() {
        [c, t] => (*c, *t),
        s => return Err(Error::Dimension(format!("stat_pool_moments: expected [C, T], got {s:?}"))),
    };
    if weights.shape() != [len] {
        return Err(Error::Dimension(format!(
            "stat_pool_moments: weights {:?} vs {len} frames",
            weights.shape()
        )));
    }
    {
        let w = weights.data();
        if let Some(bad) = w.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Invariant(format!("pooling weight {bad} is negative or NaN")));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-4 {
            return Err(Error::Invariant(format!("pooling weights sum to {total}, expected 1")));
        }
    }
    let h3 = h.reshape(&[1, channels, len])?;
    let w3 = weights.reshape(&[1, 1, len])?.broadcast_to(&[1, channels, len])?;
    let moments = weighted_moments(&h3, &w3)?;
    let mean = moments.narrow(1, 0, channels)?.reshape(&[channels])?;
    let std = moments.narrow(1, channels, channels)?.reshape(&[channels])?;
    Ok((mean, std))
}
