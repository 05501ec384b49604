use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Per-channel batch normalisation over `[B, C, T]` (or `[B, C]`) input.
///
/// `gamma`/`beta` are trainable; the running statistics are plain tensors
/// updated in place during training-mode forwards.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self::with_params(channels, 0.1, 1e-5).expect("default batch-norm params are valid")
    }

    pub fn with_params(channels: usize, momentum: f64, eps: f64) -> Result<Self> {
        if eps <= 0.0 || !eps.is_finite() {
            return Err(Error::Config(format!("batch-norm eps must be positive, got {eps}")));
        }
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::Config(format!("batch-norm momentum must lie in [0, 1], got {momentum}")));
        }
        Ok(Self {
            gamma: Tensor::parameter(vec![1.0; channels], &[channels])?,
            beta: Tensor::parameter(vec![0.0; channels], &[channels])?,
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            momentum,
            eps,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    pub fn forward(&self, x: &Tensor, training: bool) -> Result<Tensor> {
        batch_norm(x, self, training)
    }
}

fn layout(x: &Tensor, channels: usize) -> Result<(usize, usize)> {
    match x.shape() {
        [b, c] if *c == channels => Ok((*b, 1)),
        [b, c, t] if *c == channels => Ok((*b, *t)),
        s => Err(Error::Dimension(format!(
            "batch_norm: input {s:?} does not carry {channels} channels on axis 1"
        ))),
    }
}

/// Training mode normalises with batch statistics (biased variance) and
/// blends them into the running estimates (unbiased variance); inference
/// mode uses the running estimates.
pub fn batch_norm(x: &Tensor, bn: &BatchNorm, training: bool) -> Result<Tensor> {
    if bn.eps <= 0.0 {
        return Err(Error::Config(format!("batch-norm eps must be positive, got {}", bn.eps)));
    }
    let channels = bn.channels();
    let (batch, len) = layout(x, channels)?;
    let n = (batch * len) as f64;
    let xv = x.to_vec();
    let gamma = bn.gamma.to_vec();
    let beta = bn.beta.to_vec();
    let at = move |b: usize, c: usize| (b * channels + c) * len;

    let (mean, var) = if training {
        let mut mean = vec![0.0; channels];
        let mut var = vec![0.0; channels];
        for c in 0..channels {
            let s: f64 = (0..batch).map(|b| xv[at(b, c)..at(b, c) + len].iter().sum::<f64>()).sum();
            let m = s / n;
            let ss: f64 = (0..batch)
                .map(|b| xv[at(b, c)..at(b, c) + len].iter().map(|v| (v - m) * (v - m)).sum::<f64>())
                .sum();
            mean[c] = m;
            var[c] = ss / n;
        }
        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        let mom = bn.momentum;
        bn.running_mean.update_data(|rm| {
            rm.iter_mut().zip(&mean).for_each(|(r, m)| *r = (1.0 - mom) * *r + mom * m)
        });
        bn.running_var.update_data(|rv| {
            rv.iter_mut().zip(&var).for_each(|(r, v)| *r = (1.0 - mom) * *r + mom * v * unbias)
        });
        (mean, var)
    } else {
        (bn.running_mean.to_vec(), bn.running_var.to_vec())
    };

    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();
    let mut xhat = vec![0.0; xv.len()];
    let mut y = vec![0.0; xv.len()];
    for b in 0..batch {
        for c in 0..channels {
            for i in at(b, c)..at(b, c) + len {
                xhat[i] = (xv[i] - mean[c]) * inv_std[c];
                y[i] = gamma[c] * xhat[i] + beta[c];
            }
        }
    }

    let needs = [x.requires_grad(), bn.gamma.requires_grad(), bn.beta.requires_grad()];
    Ok(Tensor::from_op(
        x.shape().to_vec(),
        y,
        "batch_norm",
        vec![x.clone(), bn.gamma.clone(), bn.beta.clone()],
        move |g| {
            let mut dgamma = vec![0.0; channels];
            let mut dbeta = vec![0.0; channels];
            for b in 0..batch {
                for c in 0..channels {
                    for i in at(b, c)..at(b, c) + len {
                        dgamma[c] += g[i] * xhat[i];
                        dbeta[c] += g[i];
                    }
                }
            }
            let dx = needs[0].then(|| {
                let mut dx = vec![0.0; g.len()];
                for c in 0..channels {
                    let scale = gamma[c] * inv_std[c];
                    if training {
                        // dx = gamma/sigma * (g - mean(g) - xhat * mean(g * xhat))
                        let mean_g = dbeta[c] / n;
                        let mean_gx = dgamma[c] / n;
                        for b in 0..batch {
                            for i in at(b, c)..at(b, c) + len {
                                dx[i] = scale * (g[i] - mean_g - xhat[i] * mean_gx);
                            }
                        }
                    } else {
                        for b in 0..batch {
                            for i in at(b, c)..at(b, c) + len {
                                dx[i] = scale * g[i];
                            }
                        }
                    }
                }
                dx
            });
            vec![dx, needs[1].then_some(dgamma), needs[2].then_some(dbeta)]
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_output_is_standardised() {
        let bn = BatchNorm::new(2);
        let data: Vec<f64> = (0..24).map(|i| ((i * 7) % 11) as f64 * 0.3 - 1.0).collect();
        let x = Tensor::from_vec(data, &[3, 2, 4]).unwrap();
        let y = bn.forward(&x, true).unwrap().to_vec();
        for c in 0..2 {
            let vals: Vec<f64> = (0..3).flat_map(|b| y[(b * 2 + c) * 4..(b * 2 + c + 1) * 4].to_vec()).collect();
            let m = vals.iter().sum::<f64>() / 12.0;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 12.0;
            assert!(m.abs() < 1e-6);
            assert!((v - 1.0).abs() < 1e-4, "variance {v}");
        }
    }

    #[test]
    fn constant_channel_maps_to_zero() {
        let bn = BatchNorm::new(1);
        let x = Tensor::full(&[2, 1, 5], 3.25);
        let y = bn.forward(&x, true).unwrap();
        assert!(y.to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn running_stats_follow_momentum_recurrence() {
        let bn = BatchNorm::with_params(1, 0.25, 1e-5).unwrap();
        let batches = [vec![1.0, 3.0], vec![-2.0, 6.0]];
        let (mut rm, mut rv) = (0.0, 1.0);
        for data in &batches {
            let x = Tensor::from_vec(data.clone(), &[2, 1]).unwrap();
            bn.forward(&x, true).unwrap();
            let m = (data[0] + data[1]) / 2.0;
            let unbiased = ((data[0] - m).powi(2) + (data[1] - m).powi(2)) / 1.0;
            rm = 0.75 * rm + 0.25 * m;
            rv = 0.75 * rv + 0.25 * unbiased;
        }
        assert!((bn.running_mean.item() - rm).abs() < 1e-15);
        assert!((bn.running_var.item() - rv).abs() < 1e-15);
    }

    #[test]
    fn inference_uses_running_stats() {
        let bn = BatchNorm::new(1);
        bn.running_mean.set_data(&[2.0]).unwrap();
        bn.running_var.set_data(&[4.0]).unwrap();
        let x = Tensor::from_vec(vec![2.0, 6.0], &[2, 1]).unwrap();
        let y = bn.forward(&x, false).unwrap().to_vec();
        assert_eq!(y[0], 0.0);
        assert!((y[1] - 4.0 / (4.0f64 + 1e-5).sqrt()).abs() < 1e-12);
        assert_eq!(bn.running_mean.item(), 2.0);
    }

    #[test]
    fn rejects_bad_eps_and_channels() {
        assert!(matches!(BatchNorm::with_params(2, 0.1, 0.0), Err(Error::Config(_))));
        let bn = BatchNorm::new(3);
        assert!(bn.forward(&Tensor::zeros(&[2, 2, 4]), true).is_err());
    }
}
