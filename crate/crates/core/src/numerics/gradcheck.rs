//! Central finite-difference gradient checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{no_grad, Tensor};
use crate::error::Result;

/// Outcome of [`check_gradients`]: one relative error per input.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub relative_errors: Vec<f64>,
    /// `|g_ad - g_fd|_2` per input.
    pub abs_errors: Vec<f64>,
    /// `max(|g_ad|_2, |g_fd|_2)` per input.
    pub scales: Vec<f64>,
}

impl GradCheck {
    pub fn max_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }

    /// Like [`max_error`](Self::max_error), but each denominator is at least
    /// `floor` times the norm of the whole gradient. An input whose true
    /// gradient vanishes (a conv bias followed by batch norm) otherwise
    /// compares two roundoff residues.
    pub fn max_error_floored(&self, floor: f64) -> f64 {
        let total = self.scales.iter().map(|s| s * s).sum::<f64>().sqrt();
        self.abs_errors
            .iter()
            .zip(&self.scales)
            .map(|(d, s)| {
                let den = s.max(floor * total);
                if den > 0.0 { d / den } else { 0.0 }
            })
            .fold(0.0, f64::max)
    }
}

/// Compares autodiff gradients of `f` against central differences with
/// step `h`.
///
/// The output of `f` is reduced to a scalar through a fixed random
/// projection, so ops whose outputs have a constant sum (softmax) are still
/// exercised. Each input's error is `|g_ad - g_fd|_2 / max(|g_ad|_2, |g_fd|_2)`.
/// `inputs` must be trainable leaves.
pub fn check_gradients<F>(f: F, inputs: &[Tensor], h: f64, seed: u64) -> Result<GradCheck>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let probe = f(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj: Vec<f64> = (0..probe.numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let proj = Tensor::from_vec(proj, probe.shape())?;

    for x in inputs {
        x.zero_grad();
    }
    f(inputs)?.mul(&proj)?.sum().backward()?;
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|x| x.grad().unwrap_or_else(|| vec![0.0; x.numel()]))
        .collect();

    let objective = |xs: &[Tensor]| -> Result<f64> {
        no_grad(|| Ok(f(xs)?.mul(&proj)?.sum().item()))
    };

    let mut relative_errors = Vec::with_capacity(inputs.len());
    let mut abs_errors = Vec::with_capacity(inputs.len());
    let mut scales = Vec::with_capacity(inputs.len());
    for (idx, x) in inputs.iter().enumerate() {
        let base = x.to_vec();
        let mut numeric = vec![0.0; base.len()];
        for i in 0..base.len() {
            let mut probe = base.clone();
            probe[i] = base[i] + h;
            x.set_data(&probe)?;
            let up = objective(inputs)?;
            probe[i] = base[i] - h;
            x.set_data(&probe)?;
            let down = objective(inputs)?;
            numeric[i] = (up - down) / (2.0 * h);
        }
        x.set_data(&base)?;
        let a = &analytic[idx];
        let diff = a.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale = norm(a).max(norm(&numeric));
        relative_errors.push(if scale > 0.0 { diff / scale } else { 0.0 });
        abs_errors.push(diff);
        scales.push(scale);
        x.zero_grad();
    }
    Ok(GradCheck {
        relative_errors,
        abs_errors,
        scales,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
