//! Embedding extraction, trial scoring and the metrics report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use super::metrics::{cosine_score, det_points, eer_from_points, min_dcf_from_points, DcfParams, DetPoint, ScoreSet};
use super::trials::{ScoredTrial, TrialList};
use crate::error::{Error, Result};
use crate::frontend::{FeatureConfig, FeatureExtractor, Utterance};
use crate::model::{Model, SpeakerEmbedding};

/// Inference-mode embeddings of `utts`, in input order.
pub fn embed_utterances(model: &Model, utts: &[&Utterance], feature_cfg: &FeatureConfig) -> Result<Vec<SpeakerEmbedding>> {
    let extractor = FeatureExtractor::new(feature_cfg)?;
    utts.par_iter()
        .map(|u| model.embed(&extractor.features(&u.samples)?, &u.utterance_id))
        .collect()
}

/// Cosine-scores every trial. All ids must be present.
pub fn score_trials(embeddings: &BTreeMap<String, SpeakerEmbedding>, trials: &TrialList) -> Result<Vec<ScoredTrial>> {
    let missing: BTreeSet<String> = trials
        .trials
        .iter()
        .flat_map(|t| [&t.enroll, &t.test])
        .filter(|id| !embeddings.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds(missing.into_iter().collect()));
    }
    trials
        .trials
        .iter()
        .map(|t| {
            let score = cosine_score(&embeddings[&t.enroll].vector, &embeddings[&t.test].vector)?;
            Ok(ScoredTrial { trial: t.clone(), score })
        })
        .collect()
}

/// Summary of one score distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl ScoreStats {
    fn of(v: &[f64]) -> Self {
        let n = v.len().max(1) as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self {
            count: v.len(),
            mean,
            std,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub eer: f64,
    pub eer_threshold: f64,
    pub min_dcf: f64,
    pub min_dcf_threshold: f64,
    pub dcf: DcfParams,
    pub n_target: usize,
    pub n_nontarget: usize,
    /// Unique utterances embedded (0 when scores came from a file).
    pub n_embedded: usize,
    /// Embedding lookups served from the cache.
    pub cache_hits: usize,
    pub target_stats: ScoreStats,
    pub nontarget_stats: ScoreStats,
    /// Counts over `HISTOGRAM_BINS` equal bins spanning `[-1, 1]`, all trials.
    pub histogram: Vec<usize>,
    pub det: Vec<DetPoint>,
}

impl EvalReport {
    pub fn from_scores(rows: &[ScoredTrial], dcf: &DcfParams) -> Result<Self> {
        dcf.validate()?;
        let set = ScoreSet::new(
            rows.iter().map(|r| r.trial.target).collect(),
            rows.iter().map(|r| r.score).collect(),
        )?;
        let det = det_points(&set)?;
        let (eer, eer_threshold) = eer_from_points(&det);
        let (min_dcf, min_dcf_threshold) = min_dcf_from_points(&det, dcf);
        let tar: Vec<f64> = rows.iter().filter(|r| r.trial.target).map(|r| r.score).collect();
        let non: Vec<f64> = rows.iter().filter(|r| !r.trial.target).map(|r| r.score).collect();
        let mut histogram = vec![0; HISTOGRAM_BINS];
        for r in rows {
            let bin = ((r.score + 1.0) / 2.0 * HISTOGRAM_BINS as f64).floor();
            histogram[(bin.max(0.0) as usize).min(HISTOGRAM_BINS - 1)] += 1;
        }
        Ok(Self {
            eer,
            eer_threshold,
            min_dcf,
            min_dcf_threshold,
            dcf: *dcf,
            n_target: tar.len(),
            n_nontarget: non.len(),
            n_embedded: 0,
            cache_hits: 0,
            target_stats: ScoreStats::of(&tar),
            nontarget_stats: ScoreStats::of(&non),
            histogram,
            det,
        })
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("eer", format!("{}", self.eer));
        kv("eer_threshold", format!("{}", self.eer_threshold));
        kv("min_dcf", format!("{}", self.min_dcf));
        kv("min_dcf_threshold", format!("{}", self.min_dcf_threshold));
        kv("p_target", format!("{}", self.dcf.p_target));
        kv("c_miss", format!("{}", self.dcf.c_miss));
        kv("c_fa", format!("{}", self.dcf.c_fa));
        kv("n_target", self.n_target.to_string());
        kv("n_nontarget", self.n_nontarget.to_string());
        kv("n_embedded", self.n_embedded.to_string());
        kv("cache_hits", self.cache_hits.to_string());
        for (name, st) in [("target", &self.target_stats), ("nontarget", &self.nontarget_stats)] {
            kv(&format!("{name}_mean"), format!("{}", st.mean));
            kv(&format!("{name}_std"), format!("{}", st.std));
            kv(&format!("{name}_min"), format!("{}", st.min));
            kv(&format!("{name}_max"), format!("{}", st.max));
        }
        let hist: Vec<String> = self.histogram.iter().map(usize::to_string).collect();
        kv("histogram", hist.join(","));
        s
    }

    /// `p_miss,p_fa,threshold` with a header row.
    pub fn det_csv(&self) -> String {
        let mut s = String::from("p_miss,p_fa,threshold\n");
        for p in &self.det {
            let _ = writeln!(s, "{},{},{}", p.p_miss, p.p_fa, p.threshold);
        }
        s
    }
}

/// Full verification run: embed each unique trial utterance once, score,
/// and compute the metrics.
pub fn evaluate(
    model: &Model,
    corpus: &[Utterance],
    trials: &TrialList,
    dcf: &DcfParams,
    feature_cfg: &FeatureConfig,
) -> Result<(EvalReport, Vec<ScoredTrial>)> {
    let index: BTreeMap<&str, &Utterance> = corpus.iter().map(|u| (u.utterance_id.as_str(), u)).collect();
    let ids = trials.unique_ids();
    let missing: Vec<String> = ids.iter().filter(|id| !index.contains_key(id.as_str())).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds(missing));
    }
    let utts: Vec<&Utterance> = ids.iter().map(|id| index[id.as_str()]).collect();
    let embeddings: BTreeMap<String, SpeakerEmbedding> = embed_utterances(model, &utts, feature_cfg)?
        .into_iter()
        .map(|e| (e.utterance_id.clone(), e))
        .collect();
    let rows = score_trials(&embeddings, trials)?;
    let mut report = EvalReport::from_scores(&rows, dcf)?;
    report.n_embedded = embeddings.len();
    report.cache_hits = 2 * trials.len() - embeddings.len();
    Ok((report, rows))
}
