//! File-level commands shared by the CLI and the integration tests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    embed_utterances, format_scores, read_scores, score_trials, DcfParams, EvalReport, ScoredTrial, TrialList,
};
use crate::frontend::{synth_corpus, wav_read, wav_write, FeatureConfig, Utterance};
use crate::model::{
    build_model, count_flops, count_params, count_params_with_head, load_checkpoint, save_checkpoint, ModelConfig,
    SpeakerEmbedding,
};
use crate::seeding::derive_rng;
use crate::train::{train, ClassifierHead, TrainConfig, TrainReport, TrainSet};

pub const MANIFEST: &str = "manifest.txt";
pub const TRAIN_TRIALS: &str = "trials_train.txt";
pub const TEST_TRIALS: &str = "trials_test.txt";
pub const CHECKPOINT: &str = "model.ckpt";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const SUMMARY: &str = "summary.json";
/// Classifier width used when reporting parameter counts with a head.
pub const REFERENCE_SPEAKERS: usize = 1211;

/// Architecture selection: a named preset plus optional field overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: String,
    pub layer_channels: Option<Vec<usize>>,
    pub kernel_sizes: Option<Vec<usize>>,
    pub dilations: Option<Vec<usize>>,
    pub mfa_channels: Option<usize>,
    pub kernels: Option<usize>,
    pub mfa_kernels: Option<usize>,
    pub scale: Option<usize>,
    pub se_reduction: Option<usize>,
    pub kernel_att_reduction: Option<usize>,
    pub att_channels: Option<usize>,
    pub embedding_dim: Option<usize>,
    pub temperature: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            preset: "dconv3-small".into(),
            layer_channels: None,
            kernel_sizes: None,
            dilations: None,
            mfa_channels: None,
            kernels: None,
            mfa_kernels: None,
            scale: None,
            se_reduction: None,
            kernel_att_reduction: None,
            att_channels: None,
            embedding_dim: None,
            temperature: None,
        }
    }
}

impl ModelSection {
    /// The tiny test-scale architecture expressed as overrides.
    pub fn tiny() -> Self {
        let t = ModelConfig::tiny();
        Self {
            preset: "dconv3".into(),
            layer_channels: Some(t.layer_channels),
            mfa_channels: Some(t.mfa_channels),
            kernels: Some(t.kernels),
            scale: Some(t.scale),
            ..Self::default()
        }
    }

    pub fn resolve(&self, n_mels: usize) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::preset(&self.preset)?;
        let mut custom = false;
        macro_rules! apply {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    cfg.$f = v.clone();
                    custom = true;
                }
            )*};
        }
        apply!(
            layer_channels,
            kernel_sizes,
            dilations,
            mfa_channels,
            kernels,
            mfa_kernels,
            scale,
            se_reduction,
            kernel_att_reduction,
            att_channels,
            embedding_dim,
            temperature
        );
        if custom {
            cfg.name = format!("{}+custom", self.preset);
        }
        cfg.n_mels = n_mels;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything a run needs, loaded from TOML. Unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// The only seed: it also replaces `train.seed`.
    pub seed: u64,
    /// Worker threads for feature extraction and embedding (0 = all cores).
    pub jobs: usize,
    pub feature: FeatureConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub dcf: DcfParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 0,
            feature: FeatureConfig::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            dcf: DcfParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        self.model.resolve(self.feature.n_mels)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.feature.validate()?;
        self.model_config()?;
        self.train_config().validate()?;
        self.dcf.validate()
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    /// Relative to the manifest's directory unless absolute.
    pub path: PathBuf,
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 3 {
            return Err(Error::Line {
                path: path.display().to_string(),
                line: i + 1,
                msg: "expected `<utt_id> <speaker_id> <path>`".into(),
            });
        }
        rows.push(ManifestEntry {
            utterance_id: f[0].into(),
            speaker_id: f[1].into(),
            path: f[2].into(),
        });
    }
    Ok(rows)
}

pub fn load_corpus(dir: &Path) -> Result<Vec<Utterance>> {
    read_manifest(dir)?
        .iter()
        .map(|e| wav_read(&dir.join(&e.path), &e.speaker_id, &e.utterance_id))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub n_utterances: usize,
    pub n_train_trials: usize,
    pub n_test_trials: usize,
}

/// Writes `wav/*.wav`, the manifest and both trial lists into `out`.
pub fn cmd_synth(out: &Path, speakers: usize, utts: usize, seconds: f64, seed: u64) -> Result<SynthSummary> {
    let corpus = synth_corpus(speakers, utts, seconds, seed)?;
    let wav_dir = out.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let mut manifest = String::new();
    for u in &corpus.utterances {
        let rel = format!("wav/{}.wav", u.utterance_id);
        wav_write(&out.join(&rel), &u.samples, u.sample_rate)?;
        let _ = writeln!(manifest, "{} {} {rel}", u.utterance_id, u.speaker_id);
    }
    write(&out.join(MANIFEST), &manifest)?;
    corpus.train_trials.write(&out.join(TRAIN_TRIALS))?;
    corpus.test_trials.write(&out.join(TEST_TRIALS))?;
    Ok(SynthSummary {
        n_utterances: corpus.utterances.len(),
        n_train_trials: corpus.train_trials.len(),
        n_test_trials: corpus.test_trials.len(),
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Trains on every manifest utterance not mentioned in `trials_test.txt`,
/// then writes the checkpoint, the step log and `summary.json` into `out`.
pub fn cmd_train(run: &RunConfig, data: &Path, out: &Path) -> Result<TrainReport> {
    run.validate()?;
    let mut utts = load_corpus(data)?;
    let test_path = data.join(TEST_TRIALS);
    if test_path.exists() {
        let held: BTreeSet<String> = TrialList::read(&test_path)?.unique_ids().into_iter().collect();
        utts.retain(|u| !held.contains(&u.utterance_id));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let cfg = run.train_config();
    let set = TrainSet::new(utts, &run.feature)?;
    let mut model = build_model(&run.model_config()?, run.seed)?;
    let head = ClassifierHead::new(&mut derive_rng(run.seed, "head"), model.config.embedding_dim, set.n_speakers())?;
    let report = train(&mut model, &head, &set, &cfg, Some(out))?;
    save_checkpoint(&model, &out.join(CHECKPOINT))?;
    write(&out.join(TRAIN_LOG), &report.log_csv())?;
    write(&out.join(SUMMARY), &report.summary_json())?;
    Ok(report)
}

/// Embeds the utterances named in `trials` (or every manifest entry).
pub fn compute_embeddings(
    run: &RunConfig,
    checkpoint: &Path,
    data: &Path,
    trials: Option<&TrialList>,
) -> Result<Vec<SpeakerEmbedding>> {
    let model = load_checkpoint(checkpoint)?;
    let corpus = load_corpus(data)?;
    let wanted: Vec<&Utterance> = match trials {
        None => corpus.iter().collect(),
        Some(t) => {
            let index: BTreeMap<&str, &Utterance> = corpus.iter().map(|u| (u.utterance_id.as_str(), u)).collect();
            let ids = t.unique_ids();
            let missing: Vec<String> = ids.iter().filter(|i| !index.contains_key(i.as_str())).cloned().collect();
            if !missing.is_empty() {
                return Err(Error::MissingIds(missing));
            }
            ids.iter().map(|i| index[i.as_str()]).collect()
        }
    };
    embed_utterances(&model, &wanted, &run.feature)
}

/// `<utt_id> <v_1> ... <v_D>` per line.
pub fn format_embeddings(embs: &[SpeakerEmbedding]) -> String {
    let mut s = String::new();
    for e in embs {
        s.push_str(&e.utterance_id);
        for v in &e.vector {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s
}

pub fn read_embeddings(path: &Path) -> Result<BTreeMap<String, SpeakerEmbedding>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let mut f = line.split_whitespace();
        let Some(id) = f.next() else { continue };
        let err = |msg: String| Error::Line {
            path: path.display().to_string(),
            line: i + 1,
            msg,
        };
        let vector = f
            .map(|v| v.parse::<f64>().map_err(|_| err(format!("`{v}` is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        let e = SpeakerEmbedding::new(id, vector).map_err(|e| err(e.to_string()))?;
        out.insert(id.to_string(), e);
    }
    Ok(out)
}

pub fn cmd_embed(run: &RunConfig, checkpoint: &Path, data: &Path, trials: Option<&Path>, out: &Path) -> Result<usize> {
    let list = trials.map(TrialList::read).transpose()?;
    let embs = compute_embeddings(run, checkpoint, data, list.as_ref())?;
    write(out, &format_embeddings(&embs))?;
    Ok(embs.len())
}

/// Where the embeddings for scoring come from.
#[derive(Debug, Clone)]
pub enum EmbeddingSource<'a> {
    Archive(&'a Path),
    Model { checkpoint: &'a Path, data: &'a Path },
}

/// Scores `trials`; the count is the number of embeddings computed here
/// (0 for an archive).
pub fn score(run: &RunConfig, source: EmbeddingSource<'_>, trials: &TrialList) -> Result<(Vec<ScoredTrial>, usize)> {
    let (embs, computed): (BTreeMap<String, SpeakerEmbedding>, usize) = match source {
        EmbeddingSource::Archive(p) => (read_embeddings(p)?, 0),
        EmbeddingSource::Model { checkpoint, data } => {
            let embs = compute_embeddings(run, checkpoint, data, Some(trials))?;
            let n = embs.len();
            (embs.into_iter().map(|e| (e.utterance_id.clone(), e)).collect(), n)
        }
    };
    Ok((score_trials(&embs, trials)?, computed))
}

pub fn cmd_score(run: &RunConfig, source: EmbeddingSource<'_>, trials: &Path, out: &Path) -> Result<usize> {
    let (rows, _) = score(run, source, &TrialList::read(trials)?)?;
    write(out, &format_scores(&rows))?;
    Ok(rows.len())
}

/// Input of `cmd_eval`.
#[derive(Debug, Clone)]
pub enum EvalInput<'a> {
    Scores(&'a Path),
    Embeddings { source: EmbeddingSource<'a>, trials: &'a Path },
}

/// DET CSV path that accompanies a report file.
pub fn det_path(report: &Path) -> PathBuf {
    report.with_extension("det.csv")
}

/// Writes the `key=value` report to `out` and the DET CSV next to it.
pub fn cmd_eval(run: &RunConfig, input: EvalInput<'_>, out: &Path) -> Result<EvalReport> {
    let report = match input {
        EvalInput::Scores(p) => EvalReport::from_scores(&read_scores(p)?, &run.dcf)?,
        EvalInput::Embeddings { source, trials } => {
            let list = TrialList::read(trials)?;
            let (rows, embedded) = score(run, source, &list)?;
            let mut r = EvalReport::from_scores(&rows, &run.dcf)?;
            r.n_embedded = embedded;
            if embedded > 0 {
                r.cache_hits = 2 * list.len() - embedded;
            }
            r
        }
    };
    write(out, &report.to_text())?;
    write(&det_path(out), &report.det_csv())?;
    Ok(report)
}

/// Exact parameter and FLOP counts of a preset.
pub fn cmd_params(preset: &str) -> Result<String> {
    let cfg = ModelConfig::preset(preset)?;
    let model = build_model(&cfg, 0)?;
    let p = count_params(&model);
    let ph = count_params_with_head(&model, REFERENCE_SPEAKERS);
    let flops = count_flops(&model, 300);
    let mut s = String::new();
    let _ = writeln!(s, "preset={preset}");
    let _ = writeln!(s, "params={p} ({:.2}m)", p as f64 / 1e6);
    let _ = writeln!(s, "params_with_head={ph} ({:.2}m, {REFERENCE_SPEAKERS}-speaker classifier)", ph as f64 / 1e6);
    let _ = writeln!(s, "flops_t300={flops} ({:.2}g multiply-adds)", flops as f64 / 1e9);
    Ok(s)
}

/// Sizes the global worker pool used by the parallel stages (0 = all cores).
/// Only the first call has an effect.
pub fn configure_threads(jobs: usize) {
    if jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::debug!("worker pool already configured: {e}");
        }
    }
}
