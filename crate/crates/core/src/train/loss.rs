use rand::Rng;

use crate::blocks::init::uniform;
use crate::blocks::Linear;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Dense map from embeddings to speaker logits.
#[derive(Debug, Clone)]
pub struct ClassifierHead {
    pub linear: Linear,
}

impl ClassifierHead {
    /// Small weights and zero bias so the initial logits are near zero and the
    /// first loss is close to `ln(n_speakers)`.
    pub fn new<R: Rng + ?Sized>(rng: &mut R, embedding_dim: usize, n_speakers: usize) -> Result<Self> {
        if n_speakers < 2 {
            return Err(Error::Config(format!("classifier needs at least 2 speakers, got {n_speakers}")));
        }
        let bound = 0.1 * (3.0 / embedding_dim.max(1) as f64).sqrt();
        Ok(Self {
            linear: Linear {
                weight: uniform(rng, &[n_speakers, embedding_dim], bound)?,
                bias: Tensor::parameter(vec![0.0; n_speakers], &[n_speakers])?,
            },
        })
    }

    pub fn n_speakers(&self) -> usize {
        self.linear.n_out()
    }

    pub fn forward(&self, emb: &Tensor) -> Result<Tensor> {
        self.linear.forward(emb)
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        vec![self.linear.weight.clone(), self.linear.bias.clone()]
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        self.linear.named_tensors("head")
    }
}

/// Mean softmax cross-entropy of `logits: [B, S]` against class indices.
pub fn ce_loss(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (b, s) = match logits.shape() {
        [b, s] => (*b, *s),
        sh => return Err(Error::Dimension(format!("ce_loss expects [B, S] logits, got {sh:?}"))),
    };
    if labels.len() != b {
        return Err(Error::Dimension(format!("ce_loss: {} labels for {b} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= s) {
        return Err(Error::Input(format!("label {bad} out of range for {s} classes")));
    }
    let z = logits.to_vec();
    let mut probs = vec![0.0; b * s];
    let mut total = 0.0;
    for r in 0..b {
        let row = &z[r * s..(r + 1) * s];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[labels[r]];
        for c in 0..s {
            probs[r * s + c] = (row[c] - lse).exp();
        }
    }
    let labels = labels.to_vec();
    Ok(Tensor::from_op(Vec::new(), vec![total / b as f64], "ce_loss", vec![logits.clone()], move |g| {
        let scale = g[0] / b as f64;
        let mut gz = probs.clone();
        for (r, &l) in labels.iter().enumerate() {
            gz[r * s + l] -= 1.0;
        }
        gz.iter_mut().for_each(|v| *v *= scale);
        vec![Some(gz)]
    }))
}

/// Row-wise argmax.
pub fn predictions(logits: &Tensor) -> Vec<usize> {
    let s = *logits.shape().last().unwrap_or(&1);
    logits
        .to_vec()
        .chunks(s)
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0)
        })
        .collect()
}
