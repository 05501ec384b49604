use crate::blocks::{attention_hidden, AttentiveStatsPool, DconvBlock, HierResBlock, Linear};
use crate::error::{Error, Result};
use crate::numerics::{concat, no_grad, BatchNorm, Tensor};
use crate::seeding::derive_rng;

use super::config::ModelConfig;

/// Shortest input accepted by [`Model::embed`].
pub const MIN_EMBED_FRAMES: usize = 20;

/// A fixed-length utterance representation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    pub utterance_id: String,
    pub vector: Vec<f64>,
    pub l2_norm: f64,
}

impl SpeakerEmbedding {
    pub fn new(utterance_id: impl Into<String>, vector: Vec<f64>) -> Result<Self> {
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant("embedding has non-finite entries".into()));
        }
        let l2_norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Self {
            utterance_id: utterance_id.into(),
            vector,
            l2_norm,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub stem: DconvBlock,
    pub blocks: Vec<HierResBlock>,
    /// Kernel-1 aggregation over the concatenated stem and block outputs.
    pub mfa: DconvBlock,
    pub pool: AttentiveStatsPool,
    pub pool_bn: BatchNorm,
    pub embed: Linear,
}

/// Builds a model with seed-deterministic initialisation.
pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    cfg.validate()?;
    let mut rng = derive_rng(seed, "model/init");
    let c = cfg.block_channels();
    let l = cfg.n_layers();
    let mut stem = DconvBlock::new(
        &mut rng,
        cfg.n_mels,
        c,
        cfg.kernel_sizes[0],
        cfg.dilations[0],
        cfg.kernels,
        attention_hidden(cfg.n_mels, cfg.kernel_att_reduction),
    )?;
    stem.set_temperature(cfg.temperature)?;
    let mut blocks = Vec::with_capacity(l - 2);
    for i in 1..l - 1 {
        let mut b = HierResBlock::new(
            &mut rng,
            c,
            cfg.kernel_sizes[i],
            cfg.dilations[i],
            cfg.scale,
            cfg.kernels,
            cfg.kernel_att_reduction,
            cfg.se_reduction,
        )?;
        b.set_temperature(cfg.temperature)?;
        blocks.push(b);
    }
    let cat = cfg.concat_channels();
    let mut mfa = DconvBlock::new(
        &mut rng,
        cat,
        cfg.mfa_channels,
        1,
        cfg.dilations[l - 1],
        cfg.mfa_kernels,
        attention_hidden(cat, cfg.kernel_att_reduction),
    )?;
    mfa.set_temperature(cfg.temperature)?;
    let pool = AttentiveStatsPool::new(&mut rng, cfg.mfa_channels, cfg.att_channels)?;
    let embed = Linear::new(&mut rng, 2 * cfg.mfa_channels, cfg.embedding_dim)?;
    Ok(Model {
        config: cfg.clone(),
        stem,
        blocks,
        mfa,
        pool,
        pool_bn: BatchNorm::new(2 * cfg.mfa_channels),
        embed,
    })
}

impl Model {
    /// `[B, n_mels, T] -> [B, embedding_dim]`.
    pub fn forward(&self, x: &Tensor, training: bool) -> Result<Tensor> {
        match x.shape() {
            [_, m, _] if *m == self.config.n_mels => {}
            s => {
                return Err(Error::Dimension(format!(
                    "model expects [B, {}, T], got {s:?}",
                    self.config.n_mels
                )))
            }
        }
        let mut h = self.stem.forward(x, training)?;
        let mut outs = vec![h.clone()];
        for b in &self.blocks {
            h = b.forward(&h, training)?;
            outs.push(h.clone());
        }
        let agg = self.mfa.forward(&concat(&outs, 1)?, training)?;
        let pooled = self.pool.forward(&agg)?;
        self.embed.forward(&self.pool_bn.forward(&pooled, training)?)
    }

    /// Inference-mode embedding of one `[n_mels, T]` feature matrix.
    pub fn embed(&self, feats: &Tensor, utterance_id: &str) -> Result<SpeakerEmbedding> {
        let (m, t) = match feats.shape() {
            [m, t] => (*m, *t),
            s => return Err(Error::Dimension(format!("embed expects [n_mels, T], got {s:?}"))),
        };
        if t < MIN_EMBED_FRAMES {
            return Err(Error::Input(format!(
                "{utterance_id}: {t} frames, need at least {MIN_EMBED_FRAMES}"
            )));
        }
        let out = no_grad(|| self.forward(&feats.reshape(&[1, m, t])?, false))?;
        SpeakerEmbedding::new(utterance_id, out.to_vec())
    }

    /// Every tensor that makes up the model state, parameters and running
    /// statistics, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let l = self.config.n_layers();
        let mut out = self.stem.named_tensors("blocks.0.0");
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend(b.named_tensors(&format!("blocks.{}", i + 1)));
        }
        out.extend(self.mfa.named_tensors(&format!("blocks.{}.0", l - 1)));
        out.extend(self.pool.named_tensors("pool"));
        out.extend(crate::blocks::init::bn_tensors("embed.bn", &self.pool_bn));
        out.extend(self.embed.named_tensors("embed.dense"));
        out
    }

    /// Trainable tensors only.
    pub fn parameters(&self) -> Vec<Tensor> {
        self.named_tensors()
            .into_iter()
            .filter(|(_, t)| t.requires_grad())
            .map(|(_, t)| t)
            .collect()
    }

    pub fn set_temperature(&mut self, tau: f64) -> Result<()> {
        self.stem.set_temperature(tau)?;
        self.blocks.iter_mut().try_for_each(|b| b.set_temperature(tau))?;
        self.mfa.set_temperature(tau)
    }
}

/// Trainable scalar count of the embedding extractor.
pub fn count_params(model: &Model) -> usize {
    model.parameters().iter().map(Tensor::numel).sum()
}

/// Extractor plus a `embedding_dim -> n_classes` classification layer.
pub fn count_params_with_head(model: &Model, n_classes: usize) -> usize {
    count_params(model) + (model.config.embedding_dim + 1) * n_classes
}

/// Multiply-adds of one forward pass over `frames` frames.
pub fn count_flops(model: &Model, frames: usize) -> usize {
    let cfg = &model.config;
    let c2 = 2 * cfg.mfa_channels;
    model.stem.flops(frames)
        + model.blocks.iter().map(|b| b.flops(frames)).sum::<usize>()
        + model.mfa.flops(frames)
        + model.pool.flops(frames)
        + 2 * c2
        + c2 * cfg.embedding_dim
}
