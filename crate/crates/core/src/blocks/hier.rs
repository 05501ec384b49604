//! Hierarchical residual block: chunked dynamic convolutions with
//! cascading skips, channel gating and an identity shortcut.

use rand::Rng;

use super::dconv::DconvBlock;
use super::se::SqueezeExcite;
use crate::error::{Error, Result};
use crate::numerics::{concat, Tensor};

#[derive(Debug, Clone)]
pub struct HierResBlock {
    pub scale: usize,
    /// One block per processed chunk: `scale - 1` of them, or one when
    /// `scale == 1`.
    pub convs: Vec<DconvBlock>,
    pub se: SqueezeExcite,
}

impl HierResBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        channels: usize,
        kernel_size: usize,
        dilation: usize,
        scale: usize,
        n_kernels: usize,
        att_reduction: usize,
        se_reduction: usize,
    ) -> Result<Self> {
        if scale == 0 || channels % scale != 0 {
            return Err(Error::Config(format!("{channels} channels cannot be split into {scale} groups")));
        }
        let width = channels / scale;
        let hidden = super::dconv::attention_hidden(width, att_reduction);
        let convs = (0..(scale - 1).max(1))
            .map(|_| DconvBlock::new(rng, width, width, kernel_size, dilation, n_kernels, hidden))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scale,
            convs,
            se: SqueezeExcite::new(rng, channels, se_reduction)?,
        })
    }

    pub fn channels(&self) -> usize {
        self.se.fc1.n_in()
    }

    /// The chunk cascade before gating and the shortcut.
    pub fn cascade(&self, x: &Tensor, training: bool) -> Result<Tensor> {
        let channels = self.channels();
        if x.rank() != 3 || x.shape()[1] != channels {
            return Err(Error::Dimension(format!("hierarchical block expects [B, {channels}, T], got {:?}", x.shape())));
        }
        if self.scale == 1 {
            return self.convs[0].forward(x, training);
        }
        let width = channels / self.scale;
        let mut outs: Vec<Tensor> = Vec::with_capacity(self.scale);
        outs.push(x.narrow(1, 0, width)?);
        for i in 1..self.scale {
            let g = x.narrow(1, i * width, width)?;
            let y = self.convs[i - 1].forward(&g.add(&outs[i - 1])?, training)?;
            outs.push(y);
        }
        concat(&outs, 1)
    }

    pub fn forward(&self, x: &Tensor, training: bool) -> Result<Tensor> {
        self.se.forward(&self.cascade(x, training)?)?.add(x)
    }

    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.extend(c.named_tensors(&format!("{prefix}.{i}")));
        }
        out.extend(self.se.named_tensors(&format!("{prefix}.se")));
        out
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(DconvBlock::param_count).sum::<usize>() + self.se.param_count()
    }

    pub fn flops(&self, frames: usize) -> usize {
        self.convs.iter().map(|c| c.flops(frames)).sum::<usize>() + self.se.flops(frames)
    }

    pub fn set_temperature(&mut self, tau: f64) -> Result<()> {
        self.convs.iter_mut().try_for_each(|c| c.set_temperature(tau))
    }
}
