//! Channel- and context-dependent attentive statistics pooling.

use rand::Rng;

use super::init::{bias_bound, kaiming_bound, uniform};
use crate::error::{Error, Result};
use crate::numerics::{concat, conv1d, weighted_moments, Tensor};

/// Frame-wise attention over `concat(h_t, mean(h), std(h))` producing one
/// softmax over time per channel, followed by weighted mean and std.
#[derive(Debug, Clone)]
pub struct AttentiveStatsPool {
    /// `[att, 3C, 1]`
    pub w1: Tensor,
    pub b1: Tensor,
    /// `[C, att, 1]`
    pub w2: Tensor,
    pub b2: Tensor,
}

impl AttentiveStatsPool {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, channels: usize, att_channels: usize) -> Result<Self> {
        Ok(Self {
            w1: uniform(rng, &[att_channels, 3 * channels, 1], kaiming_bound(3 * channels))?,
            b1: uniform(rng, &[att_channels], bias_bound(3 * channels))?,
            w2: uniform(rng, &[channels, att_channels, 1], kaiming_bound(att_channels))?,
            b2: uniform(rng, &[channels], bias_bound(att_channels))?,
        })
    }

    pub fn channels(&self) -> usize {
        self.w2.shape()[0]
    }

    pub fn att_channels(&self) -> usize {
        self.w1.shape()[0]
    }

    /// `[B, C, T]` attention weights, each `(b, c)` row on the simplex.
    pub fn weights(&self, h: &Tensor) -> Result<Tensor> {
        let (b, c, t) = match h.shape() {
            [b, c, t] if *c == self.channels() && *t >= 1 => (*b, *c, *t),
            s => return Err(Error::Dimension(format!("pooling expects [B, {}, T>=1], got {s:?}", self.channels()))),
        };
        let uniform_w = Tensor::full(&[b, c, t], 1.0 / t as f64);
        let stats = weighted_moments(h, &uniform_w)?;
        let mean = stats.narrow(1, 0, c)?.reshape(&[b, c, 1])?.broadcast_to(&[b, c, t])?;
        let std = stats.narrow(1, c, c)?.reshape(&[b, c, 1])?.broadcast_to(&[b, c, t])?;
        let context = concat(&[h.clone(), mean, std], 1)?;
        let hidden = conv1d(&context, &self.w1, &self.b1, 1)?.tanh();
        conv1d(&hidden, &self.w2, &self.b2, 1)?.softmax(2)
    }

    /// `[B, 2C]`: weighted means then weighted standard deviations.
    pub fn forward(&self, h: &Tensor) -> Result<Tensor> {
        weighted_moments(h, &self.weights(h)?)
    }

    /// Zeroes the attention net so the weights become uniform.
    pub fn zero(&self) {
        for t in [&self.w1, &self.b1, &self.w2, &self.b2] {
            let _ = t.set_data(&vec![0.0; t.numel()]);
        }
    }

    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, Tensor)> {
        vec![
            (format!("{prefix}.att1.weight"), self.w1.clone()),
            (format!("{prefix}.att1.bias"), self.b1.clone()),
            (format!("{prefix}.att2.weight"), self.w2.clone()),
            (format!("{prefix}.att2.bias"), self.b2.clone()),
        ]
    }

    pub fn param_count(&self) -> usize {
        let (c, a) = (self.channels(), self.att_channels());
        3 * c * a + a + a * c + c
    }

    pub fn flops(&self, frames: usize) -> usize {
        let (c, a) = (self.channels(), self.att_channels());
        2 * c * frames + (3 * c * a + a * c) * frames + 2 * c * frames
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_frame_gives_value_and_zero_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pool = AttentiveStatsPool::new(&mut rng, 3, 8).unwrap();
        let h = Tensor::from_vec(vec![0.5, -1.0, 2.0], &[1, 3, 1]).unwrap();
        let out = pool.forward(&h).unwrap().to_vec();
        assert_eq!(&out[..3], &[0.5, -1.0, 2.0]);
        assert_eq!(&out[3..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn weights_are_softmax_over_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pool = AttentiveStatsPool::new(&mut rng, 2, 4).unwrap();
        let h = uniform(&mut rng, &[3, 2, 6], 2.0).unwrap().detach();
        let w = pool.weights(&h).unwrap().to_vec();
        for row in w.chunks(6) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }
}
