//! The speaker-classification training loop.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::TrainConfig;
use super::loss::{ce_loss, predictions, ClassifierHead};
use crate::error::{Error, Result};
use crate::frontend::{add_noise, crop_segment, spec_augment, AugmentKind, AugmentSpec, FeatureConfig, FeatureExtractor, Utterance};
use crate::model::{save_checkpoint, Model};
use crate::numerics::{adam_step, no_grad, AdamState, Tensor};
use crate::seeding::derive_rng;

/// Training utterances with their labels and cached normalised features.
#[derive(Debug)]
pub struct TrainSet {
    pub utterances: Vec<Utterance>,
    pub labels: Vec<usize>,
    /// Speaker ids in label order.
    pub speakers: Vec<String>,
    pub features: Vec<Tensor>,
    extractor: FeatureExtractor,
}

impl TrainSet {
    pub fn new(utterances: Vec<Utterance>, feature_cfg: &FeatureConfig) -> Result<Self> {
        let mut speakers: Vec<String> = utterances.iter().map(|u| u.speaker_id.clone()).collect();
        speakers.sort();
        speakers.dedup();
        if speakers.len() < 2 {
            return Err(Error::Input(format!("training needs at least 2 speakers, got {}", speakers.len())));
        }
        for s in &speakers {
            let n = utterances.iter().filter(|u| &u.speaker_id == s).count();
            if n < 2 {
                return Err(Error::Input(format!("speaker {s} has {n} training utterance(s), need 2")));
            }
        }
        let labels = utterances
            .iter()
            .map(|u| speakers.binary_search(&u.speaker_id).expect("speaker listed"))
            .collect();
        let extractor = FeatureExtractor::new(feature_cfg)?;
        let features = utterances
            .par_iter()
            .map(|u| extractor.features(&u.samples))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            utterances,
            labels,
            speakers,
            features,
            extractor,
        })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn n_speakers(&self) -> usize {
        self.speakers.len()
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        self.extractor.config()
    }

    /// One cropped and possibly augmented `[n_mels, segment]` example.
    fn example(&self, idx: usize, cfg: &TrainConfig, tag: &str) -> Result<Tensor> {
        let mut rng = derive_rng(cfg.seed, tag);
        let seg = self.feature_config().segment_frames;
        let kinds = &cfg.augment.kinds;
        let kind = (!kinds.is_empty() && rng.random_bool(cfg.augment_prob)).then(|| kinds[rng.random_range(0..kinds.len())]);
        match kind {
            None => crop_segment(&self.features[idx], seg, &mut rng),
            Some(AugmentKind::Noise) => {
                let (lo, hi) = cfg.augment.noise_snr_db;
                let snr = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                let noisy = add_noise(&self.utterances[idx], snr, &mut rng)?;
                crop_segment(&self.extractor.features(&noisy.samples)?, seg, &mut rng)
            }
            Some(mask) => {
                let crop = crop_segment(&self.features[idx], seg, &mut rng)?;
                let spec = AugmentSpec {
                    freq_masks: if mask == AugmentKind::FreqMask { cfg.augment.freq_masks } else { 0 },
                    time_masks: if mask == AugmentKind::TimeMask { cfg.augment.time_masks } else { 0 },
                    ..cfg.augment.clone()
                };
                Ok(spec_augment(&crop, &spec, &mut rng)?.0)
            }
        }
    }
}

/// One logged optimiser step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub steps: usize,
    pub n_speakers: usize,
    pub n_utterances: usize,
    pub first_loss: f64,
    pub final_loss: f64,
    pub epoch_loss: Vec<f64>,
    /// Running accuracy on the augmented training batches, per epoch.
    pub epoch_acc: Vec<f64>,
    /// Accuracy of an inference pass over the full, un-augmented training
    /// utterances after the last epoch.
    pub train_accuracy: f64,
    #[serde(skip)]
    pub log: Vec<StepLog>,
}

impl TrainReport {
    /// `epoch,step,lr,loss,acc` lines with a header.
    pub fn log_csv(&self) -> String {
        let mut s = String::from("epoch,step,lr,loss,acc\n");
        for l in &self.log {
            let _ = writeln!(s, "{},{},{:e},{},{}", l.epoch, l.step, l.lr, l.loss, l.acc);
        }
        s
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Trains `model` and `head` with Adam on random fixed-length crops.
///
/// Deterministic for a given `cfg.seed`: every random draw comes from a
/// stream derived from the seed and a per-use tag, so thread count does not
/// change the result.
pub fn train(
    model: &mut Model,
    head: &ClassifierHead,
    data: &TrainSet,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if head.n_speakers() != data.n_speakers() {
        return Err(Error::Dimension(format!(
            "head predicts {} speakers, data has {}",
            head.n_speakers(),
            data.n_speakers()
        )));
    }
    if data.feature_config().n_mels != model.config.n_mels {
        return Err(Error::Config(format!(
            "features have {} mel bands, model expects {}",
            data.feature_config().n_mels,
            model.config.n_mels
        )));
    }
    let base_tau = model.config.temperature;
    let mut params = model.parameters();
    params.extend(head.parameters());
    let mut adam = AdamState::new(&params);
    let n = data.len();
    let batch = cfg.batch_size.min(n);
    let seg = data.feature_config().segment_frames;
    let n_mels = model.config.n_mels;

    let mut log = Vec::new();
    let (mut epoch_loss, mut epoch_acc) = (Vec::new(), Vec::new());
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        model.set_temperature(cfg.temperature_at(epoch, base_tau))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut derive_rng(cfg.seed, &format!("epoch/{epoch}")));
        let (mut loss_sum, mut correct, mut seen, mut batches) = (0.0, 0usize, 0usize, 0usize);
        for chunk in order.chunks(batch) {
            if chunk.len() < 2 {
                continue;
            }
            let examples = chunk
                .par_iter()
                .map(|&i| data.example(i, cfg, &format!("step/{step}/{}", data.utterances[i].utterance_id)))
                .collect::<Result<Vec<_>>>()?;
            let mut flat = Vec::with_capacity(chunk.len() * n_mels * seg);
            for e in &examples {
                flat.extend_from_slice(&e.data());
            }
            let x = Tensor::from_vec(flat, &[chunk.len(), n_mels, seg])?;
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();

            params.iter().for_each(Tensor::zero_grad);
            let logits = head.forward(&model.forward(&x, true)?)?;
            let loss = ce_loss(&logits, &labels)?;
            let lv = loss.item();
            if !lv.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    utterances: chunk.iter().map(|&i| data.utterances[i].utterance_id.clone()).collect(),
                });
            }
            loss.backward()?;
            let lr = cfg.lr_at(step);
            adam_step(&params, &mut adam, lr)?;

            let hits = predictions(&logits).iter().zip(&labels).filter(|(p, l)| p == l).count();
            log.push(StepLog {
                epoch,
                step,
                lr,
                loss: lv,
                acc: hits as f64 / chunk.len() as f64,
            });
            log::debug!("epoch {epoch} step {step} lr {lr:e} loss {lv:.4}");
            loss_sum += lv;
            correct += hits;
            seen += chunk.len();
            batches += 1;
            step += 1;
        }
        let el = loss_sum / batches.max(1) as f64;
        let ea = correct as f64 / seen.max(1) as f64;
        log::info!("epoch {} loss {el:.4} acc {ea:.3}", epoch + 1);
        epoch_loss.push(el);
        epoch_acc.push(ea);
        if let Some(dir) = checkpoint_dir {
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                save_checkpoint(model, &dir.join(format!("epoch{:03}.ckpt", epoch + 1)))?;
            }
        }
    }
    model.set_temperature(base_tau)?;

    Ok(TrainReport {
        epochs: cfg.epochs,
        steps: step,
        n_speakers: data.n_speakers(),
        n_utterances: n,
        first_loss: log.first().map_or(f64::NAN, |l| l.loss),
        final_loss: log.last().map_or(f64::NAN, |l| l.loss),
        epoch_loss,
        epoch_acc,
        train_accuracy: clean_accuracy(model, head, data)?,
        log,
    })
}

/// Inference-mode accuracy over the full training features.
pub fn clean_accuracy(model: &Model, head: &ClassifierHead, data: &TrainSet) -> Result<f64> {
    let hits = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let f = &data.features[i];
            let (m, t) = (f.shape()[0], f.shape()[1]);
            no_grad(|| -> Result<bool> {
                let emb = model.forward(&f.reshape(&[1, m, t])?, false)?;
                Ok(predictions(&head.forward(&emb)?)[0] == data.labels[i])
            })
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / data.len().max(1) as f64)
}
