//! Squeeze-and-excitation channel gating.

use rand::Rng;

use super::init::Linear;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone)]
pub struct SqueezeExcite {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl SqueezeExcite {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, channels: usize, reduction: usize) -> Result<Self> {
        let bottleneck = channels / reduction.max(1);
        if bottleneck == 0 {
            return Err(Error::Config(format!(
                "squeeze-excite reduction {reduction} leaves no units for {channels} channels"
            )));
        }
        Ok(Self {
            fc1: Linear::new(rng, channels, bottleneck)?,
            fc2: Linear::new(rng, bottleneck, channels)?,
        })
    }

    /// `[B, C]` gates in `(0, 1)`.
    pub fn gate(&self, x: &Tensor) -> Result<Tensor> {
        let pooled = x.mean_axis(2)?;
        self.fc2.forward(&self.fc1.forward(&pooled)?.relu()).map(|z| z.sigmoid())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, t) = match x.shape() {
            [b, c, t] if *c == self.fc1.n_in() => (*b, *c, *t),
            s => return Err(Error::Dimension(format!("squeeze-excite expects [B, {}, T], got {s:?}", self.fc1.n_in()))),
        };
        let s = self.gate(x)?.reshape(&[b, c, 1])?.broadcast_to(&[b, c, t])?;
        x.mul(&s)
    }

    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = self.fc1.named_tensors(&format!("{prefix}.fc1"));
        out.extend(self.fc2.named_tensors(&format!("{prefix}.fc2")));
        out
    }

    pub fn param_count(&self) -> usize {
        let (c, h) = (self.fc1.n_in(), self.fc1.n_out());
        c * h + h + h * c + c
    }

    pub fn flops(&self, frames: usize) -> usize {
        let (c, h) = (self.fc1.n_in(), self.fc1.n_out());
        c * frames + 2 * c * h + c * frames
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn saturated(bias: f64) -> (SqueezeExcite, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let se = SqueezeExcite::new(&mut rng, 4, 2).unwrap();
        se.fc2.zero();
        se.fc2.bias.set_data(&[bias; 4]).unwrap();
        let x = super::super::init::uniform(&mut rng, &[2, 4, 5], 1.0).unwrap().detach();
        (se, x)
    }

    #[test]
    fn large_positive_gate_passes_input() {
        let (se, x) = saturated(40.0);
        let y = se.forward(&x).unwrap().to_vec();
        for (a, b) in y.iter().zip(x.to_vec()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn large_negative_gate_blocks_input() {
        let (se, x) = saturated(-40.0);
        assert!(se.forward(&x).unwrap().to_vec().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn too_much_reduction_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        assert!(SqueezeExcite::new(&mut rng, 4, 8).is_err());
    }
}
