use rand::Rng;

use crate::error::Result;
use crate::numerics::Tensor;

/// Trainable tensor with entries drawn from `U(-bound, bound)`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f64) -> Result<Tensor> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 })
        .collect();
    Tensor::parameter(data, shape)
}

/// He/Kaiming uniform bound for a ReLU layer with `fan_in` inputs.
pub fn kaiming_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in.max(1) as f64).sqrt()
}

pub fn bias_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

/// A dense layer `[out, in]` with its bias.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, n_in: usize, n_out: usize) -> Result<Self> {
        Ok(Self {
            weight: uniform(rng, &[n_out, n_in], kaiming_bound(n_in))?,
            bias: uniform(rng, &[n_out], bias_bound(n_in))?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.dense(&self.weight, &self.bias)
    }

    pub fn n_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn n_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, Tensor)> {
        vec![
            (format!("{prefix}.weight"), self.weight.clone()),
            (format!("{prefix}.bias"), self.bias.clone()),
        ]
    }

    /// Zeroes weight and bias (used by tests and ablations).
    pub fn zero(&self) {
        let _ = self.weight.set_data(&vec![0.0; self.weight.numel()]);
        let _ = self.bias.set_data(&vec![0.0; self.bias.numel()]);
    }
}

pub(crate) fn bn_tensors(prefix: &str, bn: &crate::numerics::BatchNorm) -> Vec<(String, Tensor)> {
    vec![
        (format!("{prefix}.gamma"), bn.gamma.clone()),
        (format!("{prefix}.beta"), bn.beta.clone()),
        (format!("{prefix}.running_mean"), bn.running_mean.clone()),
        (format!("{prefix}.running_var"), bn.running_var.clone()),
    ]
}
