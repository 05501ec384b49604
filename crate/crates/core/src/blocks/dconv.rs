//! Dynamic convolution: an input-conditioned convex mix of K kernels.

use rand::Rng;

use super::init::{bias_bound, bn_tensors, kaiming_bound, uniform, Linear};
use crate::error::{Error, Result};
use crate::numerics::{conv1d, BatchNorm, Tensor};

/// Two-layer net mapping the time-averaged input to K kernel logits.
#[derive(Debug, Clone)]
pub struct KernelAttention {
    pub fc1: Linear,
    pub fc2: Linear,
}

/// `relu(bn(conv1d(x, sum_k a_k W_k, sum_k a_k b_k)))` with
/// `a = softmax(fc2(relu(fc1(mean_t x))) / temperature)`.
#[derive(Debug, Clone)]
pub struct DconvBlock {
    /// `[K, C_out, C_in, k]`
    pub kernels: Tensor,
    /// `[K, C_out]`
    pub biases: Tensor,
    /// Absent when K = 1: the single kernel always gets weight 1.
    pub attention: Option<KernelAttention>,
    pub bn: BatchNorm,
    pub dilation: usize,
    temperature: f64,
}

/// Hidden width of the kernel-attention net.
pub fn attention_hidden(c_in: usize, reduction: usize) -> usize {
    (c_in / reduction.max(1)).max(4)
}

impl DconvBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        c_in: usize,
        c_out: usize,
        kernel_size: usize,
        dilation: usize,
        n_kernels: usize,
        att_hidden: usize,
    ) -> Result<Self> {
        if n_kernels == 0 {
            return Err(Error::Config("a dynamic convolution needs at least one kernel".into()));
        }
        if kernel_size % 2 == 0 || dilation == 0 || c_in == 0 || c_out == 0 {
            return Err(Error::Config(format!(
                "invalid conv geometry: {c_in}->{c_out}, kernel {kernel_size}, dilation {dilation}"
            )));
        }
        let fan_in = c_in * kernel_size;
        let kernels = uniform(rng, &[n_kernels, c_out, c_in, kernel_size], kaiming_bound(fan_in))?;
        let biases = uniform(rng, &[n_kernels, c_out], bias_bound(fan_in))?;
        let attention = if n_kernels > 1 {
            Some(KernelAttention {
                fc1: Linear::new(rng, c_in, att_hidden)?,
                fc2: Linear::new(rng, att_hidden, n_kernels)?,
            })
        } else {
            None
        };
        Ok(Self {
            kernels,
            biases,
            attention,
            bn: BatchNorm::new(c_out),
            dilation,
            temperature: 1.0,
        })
    }

    pub fn n_kernels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn c_out(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn c_in(&self) -> usize {
        self.kernels.shape()[2]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.shape()[3]
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn set_temperature(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Config(format!("temperature must be positive, got {tau}")));
        }
        self.temperature = tau;
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        match x.shape() {
            [b, c, _] if *c == self.c_in() => Ok(*b),
            s => Err(Error::Dimension(format!(
                "dconv expects [B, {}, T], got {s:?}",
                self.c_in()
            ))),
        }
    }

    /// `[B, K]` mixing weights, one simplex row per batch element.
    pub fn kernel_attention(&self, x: &Tensor) -> Result<Tensor> {
        let batch = self.check_input(x)?;
        match &self.attention {
            None => Ok(Tensor::full(&[batch, 1], 1.0)),
            Some(att) => {
                let pooled = x.mean_axis(2)?;
                let hidden = att.fc1.forward(&pooled)?.relu();
                let logits = att.fc2.forward(&hidden)?;
                logits.scale(1.0 / self.temperature).softmax(1)
            }
        }
    }

    /// Aggregated convolution before batch norm.
    pub fn pre_bn(&self, x: &Tensor) -> Result<Tensor> {
        let batch = self.check_input(x)?;
        let [k, co, ci, ks] = [self.n_kernels(), self.c_out(), self.c_in(), self.kernel_size()];
        if k == 1 {
            let w = self.kernels.reshape(&[co, ci, ks])?;
            let b = self.biases.reshape(&[co])?;
            return conv1d(x, &w, &b, self.dilation);
        }
        let alpha = self.kernel_attention(x)?;
        let w = alpha
            .matmul(&self.kernels.reshape(&[k, co * ci * ks])?)?
            .reshape(&[batch, co, ci, ks])?;
        let b = alpha.matmul(&self.biases)?;
        conv1d(x, &w, &b, self.dilation)
    }

    pub fn forward(&self, x: &Tensor, training: bool) -> Result<Tensor> {
        Ok(self.bn.forward(&self.pre_bn(x)?, training)?.relu())
    }

    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = vec![
            (format!("{prefix}.kernels"), self.kernels.clone()),
            (format!("{prefix}.biases"), self.biases.clone()),
        ];
        if let Some(att) = &self.attention {
            out.extend(att.fc1.named_tensors(&format!("{prefix}.att_fc1")));
            out.extend(att.fc2.named_tensors(&format!("{prefix}.att_fc2")));
        }
        out.extend(bn_tensors(&format!("{prefix}.bn"), &self.bn));
        out
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self) -> usize {
        let (k, co, ci, ks) = (self.n_kernels(), self.c_out(), self.c_in(), self.kernel_size());
        let att = self
            .attention
            .as_ref()
            .map_or(0, |a| (ci + 1) * a.fc1.n_out() + (a.fc1.n_out() + 1) * k);
        k * (co * ci * ks + co) + att + 2 * co
    }

    /// Multiply-adds for a `T`-frame input (one batch element).
    pub fn flops(&self, frames: usize) -> usize {
        let (k, co, ci, ks) = (self.n_kernels(), self.c_out(), self.c_in(), self.kernel_size());
        let conv = co * ci * ks * frames;
        match &self.attention {
            None => conv,
            Some(a) => {
                let h = a.fc1.n_out();
                conv + ci * frames + ci * h + h * k + k * (co * ci * ks + co)
            }
        }
    }
}

/// `relu(bn(conv1d(x, W, b)))` with a single fixed kernel.
#[derive(Debug, Clone)]
pub struct StaticConvBlock {
    /// `[C_out, C_in, k]`
    pub kernel: Tensor,
    pub bias: Tensor,
    pub bn: BatchNorm,
    pub dilation: usize,
}

impl StaticConvBlock {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, c_in: usize, c_out: usize, kernel_size: usize, dilation: usize) -> Result<Self> {
        let fan_in = c_in * kernel_size;
        Ok(Self {
            kernel: uniform(rng, &[c_out, c_in, kernel_size], kaiming_bound(fan_in))?,
            bias: uniform(rng, &[c_out], bias_bound(fan_in))?,
            bn: BatchNorm::new(c_out),
            dilation,
        })
    }

    /// Shares the kernel, bias and batch-norm state of a K = 1 dynamic block.
    pub fn from_dconv(block: &DconvBlock) -> Result<Self> {
        if block.n_kernels() != 1 {
            return Err(Error::Config(format!(
                "only a single-kernel block has a static twin, got K = {}",
                block.n_kernels()
            )));
        }
        Ok(Self {
            kernel: block.kernels.reshape(&[block.c_out(), block.c_in(), block.kernel_size()])?,
            bias: block.biases.reshape(&[block.c_out()])?,
            bn: block.bn.clone(),
            dilation: block.dilation,
        })
    }

    pub fn forward(&self, x: &Tensor, training: bool) -> Result<Tensor> {
        let y = conv1d(x, &self.kernel, &self.bias, self.dilation)?;
        Ok(self.bn.forward(&y, training)?.relu())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn input(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        uniform(rng, shape, 1.0).unwrap().detach()
    }

    #[test]
    fn zero_logit_layer_gives_uniform_mix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let block = DconvBlock::new(&mut rng, 3, 2, 3, 1, 4, 4).unwrap();
        block.attention.as_ref().unwrap().fc2.zero();
        let alpha = block.kernel_attention(&input(&mut rng, &[5, 3, 7])).unwrap();
        assert!(alpha.to_vec().iter().all(|&a| (a - 0.25).abs() < 1e-15));
    }

    #[test]
    fn huge_temperature_flattens_mix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut block = DconvBlock::new(&mut rng, 3, 2, 3, 1, 4, 4).unwrap();
        block.set_temperature(1e6).unwrap();
        let alpha = block.kernel_attention(&input(&mut rng, &[2, 3, 7])).unwrap();
        assert!(alpha.to_vec().iter().all(|&a| (a - 0.25).abs() < 1e-3));
        assert!(block.set_temperature(0.0).is_err());
    }

    #[test]
    fn batch_rows_match_single_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let block = DconvBlock::new(&mut rng, 3, 4, 3, 2, 3, 4).unwrap();
        let x = input(&mut rng, &[2, 3, 9]);
        let both = block.pre_bn(&x).unwrap().to_vec();
        for b in 0..2 {
            let one = block.pre_bn(&x.narrow(0, b, 1).unwrap()).unwrap().to_vec();
            for (a, e) in both[b * 36..(b + 1) * 36].iter().zip(&one) {
                assert!((a - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn param_count_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let stat = DconvBlock::new(&mut rng, 3, 4, 5, 1, 1, 4).unwrap();
        assert_eq!(stat.param_count(), 4 * 3 * 5 + 4 + 2 * 4);
        let dyn4 = DconvBlock::new(&mut rng, 3, 4, 5, 1, 4, 4).unwrap();
        let att = (3 * 4 + 4) + (4 * 4 + 4);
        assert_eq!(dyn4.param_count(), 4 * 60 + 4 * 4 + att + 2 * 4);
        let counted: usize = dyn4
            .named_tensors("b")
            .iter()
            .filter(|(_, t)| t.requires_grad())
            .map(|(_, t)| t.numel())
            .sum();
        assert_eq!(counted, dyn4.param_count());
    }

    #[test]
    fn rejects_wrong_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let block = DconvBlock::new(&mut rng, 3, 4, 3, 1, 2, 4).unwrap();
        assert!(matches!(block.forward(&Tensor::zeros(&[1, 2, 5]), true), Err(Error::Dimension(_))));
    }
}
