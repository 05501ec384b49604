//! Synthetic harmonic-voice corpus for desk-scale experiments.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::Rng;

use super::augment::add_noise;
use super::wav::Utterance;
use crate::error::{Error, Result};
use crate::eval::{Trial, TrialList};
use crate::seeding::derive_rng;

pub const SYNTH_RATE: u32 = 16_000;

/// The fixed partial structure of one synthetic speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerProfile {
    pub f0: f64,
    /// Harmonic numbers (distinct, ascending).
    pub harmonics: Vec<usize>,
    pub amplitudes: Vec<f64>,
}

pub fn speaker_id(speaker: usize) -> String {
    format!("spk{speaker:03}")
}

pub fn utterance_id(speaker: usize, utt: usize) -> String {
    format!("spk{speaker:03}-utt{utt:02}")
}

pub fn speaker_profile(seed: u64, speaker: usize) -> SpeakerProfile {
    let mut rng = derive_rng(seed, &format!("speaker/{speaker}"));
    let f0 = rng.random_range(90.0..260.0);
    let count = rng.random_range(4..=8);
    let mut harmonics: Vec<usize> = sample(&mut rng, 16, count).into_iter().map(|h| h + 1).collect();
    harmonics.sort_unstable();
    let amplitudes = harmonics.iter().map(|_| rng.random_range(0.2..1.0)).collect();
    SpeakerProfile { f0, harmonics, amplitudes }
}

/// One utterance of `profile`: jittered F0 with vibrato, random partial
/// phases, a syllable-rate envelope and white noise at 15 to 30 dB SNR.
pub fn render_utterance(profile: &SpeakerProfile, seconds: f64, seed: u64, id: &str) -> Vec<f64> {
    let mut rng = derive_rng(seed, &format!("utt/{id}"));
    let n = (seconds * SYNTH_RATE as f64).round().max(1.0) as usize;
    let f0 = profile.f0 * (1.0 + rng.random_range(-0.03..0.03));
    let vib_rate = rng.random_range(4.0..6.0);
    let vib_depth = rng.random_range(0.005..0.015);
    let vib_phase = rng.random_range(0.0..2.0 * PI);
    let syl_rate = rng.random_range(2.5..4.5);
    let syl_phase = rng.random_range(0.0..2.0 * PI);
    let phases: Vec<f64> = profile.harmonics.iter().map(|_| rng.random_range(0.0..2.0 * PI)).collect();

    let dt = 1.0 / SYNTH_RATE as f64;
    let mut theta = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let inst = f0 * (1.0 + vib_depth * (2.0 * PI * vib_rate * t + vib_phase).sin());
        theta += 2.0 * PI * inst * dt;
        let env = 0.55 + 0.45 * (2.0 * PI * syl_rate * t + syl_phase).sin();
        let mut s = 0.0;
        for ((h, a), p) in profile.harmonics.iter().zip(&profile.amplitudes).zip(&phases) {
            let f = *h as f64 * inst;
            if f < 0.45 * SYNTH_RATE as f64 {
                s += a * (*h as f64 * theta + p).sin();
            }
        }
        out.push(env * s);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    let snr = rng.random_range(15.0..30.0);
    let clean = Utterance {
        speaker_id: String::new(),
        utterance_id: id.to_string(),
        sample_rate: SYNTH_RATE,
        samples: out,
    };
    add_noise(&clean, snr, &mut rng).map(|u| u.samples).unwrap_or(clean.samples)
}

/// Generated utterances plus disjoint-split trial lists.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub utterances: Vec<Utterance>,
    /// Utterance ids reserved for testing (never trained on).
    pub held_out: Vec<String>,
    pub train_trials: TrialList,
    pub test_trials: TrialList,
}

/// Number of held-out utterances per speaker.
pub fn held_out_per_speaker(utts_per_speaker: usize) -> usize {
    (utts_per_speaker * 2 / 5).clamp(2, utts_per_speaker.saturating_sub(2))
}

pub fn synth_corpus(n_speakers: usize, utts_per_speaker: usize, seconds: f64, seed: u64) -> Result<SynthCorpus> {
    if n_speakers < 2 {
        return Err(Error::Usage(format!("synth_corpus needs at least 2 speakers, got {n_speakers}")));
    }
    if utts_per_speaker < 4 {
        return Err(Error::Usage(format!(
            "synth_corpus needs at least 4 utterances per speaker, got {utts_per_speaker}"
        )));
    }
    if !(seconds >= 0.05) || !seconds.is_finite() {
        return Err(Error::Usage(format!("utterance length must be at least 0.05 s, got {seconds}")));
    }
    let n_test = held_out_per_speaker(utts_per_speaker);
    let mut utterances = Vec::with_capacity(n_speakers * utts_per_speaker);
    let mut test_groups = Vec::with_capacity(n_speakers);
    let mut train_groups = Vec::with_capacity(n_speakers);
    for s in 0..n_speakers {
        let profile = speaker_profile(seed, s);
        let mut test = Vec::new();
        let mut train = Vec::new();
        for u in 0..utts_per_speaker {
            let id = utterance_id(s, u);
            let samples = render_utterance(&profile, seconds, seed, &id);
            utterances.push(Utterance::new(speaker_id(s), id.clone(), SYNTH_RATE, samples)?);
            if u >= utts_per_speaker - n_test {
                test.push(id);
            } else {
                train.push(id);
            }
        }
        test_groups.push(test);
        train_groups.push(train);
    }
    Ok(SynthCorpus {
        utterances,
        held_out: test_groups.concat(),
        train_trials: balanced_trials(&train_groups, seed, "trials/train"),
        test_trials: balanced_trials(&test_groups, seed, "trials/test"),
    })
}

/// Every same-speaker pair, plus as many distinct cross-speaker pairs drawn
/// at random (fewer only when that many do not exist).
fn balanced_trials(groups: &[Vec<String>], seed: u64, tag: &str) -> TrialList {
    let mut trials = Vec::new();
    for g in groups {
        for i in 0..g.len() {
            for j in i + 1..g.len() {
                trials.push(Trial::new(true, &g[i], &g[j]));
            }
        }
    }
    let flat: Vec<(usize, &String)> = groups.iter().enumerate().flat_map(|(s, g)| g.iter().map(move |u| (s, u))).collect();
    let same: usize = groups.iter().map(|g| g.len() * g.len().saturating_sub(1) / 2).sum();
    let cross = flat.len() * flat.len().saturating_sub(1) / 2 - same;
    let wanted = trials.len().min(cross);
    let mut rng = derive_rng(seed, tag);
    let mut seen = BTreeSet::new();
    while seen.len() < wanted {
        let a = rng.random_range(0..flat.len());
        let b = rng.random_range(0..flat.len());
        if flat[a].0 == flat[b].0 {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if seen.insert(key) {
            trials.push(Trial::new(false, flat[a].1, flat[b].1));
        }
    }
    TrialList { trials }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_are_deterministic_and_in_range() {
        for s in 0..30 {
            let p = speaker_profile(5, s);
            assert_eq!(p, speaker_profile(5, s));
            assert!((90.0..260.0).contains(&p.f0));
            assert!((4..=8).contains(&p.harmonics.len()));
            assert!(p.harmonics.windows(2).all(|w| w[0] < w[1]));
        }
        assert_ne!(speaker_profile(5, 0), speaker_profile(6, 0));
    }

    #[test]
    fn held_out_split_sizes() {
        assert_eq!(held_out_per_speaker(4), 2);
        assert_eq!(held_out_per_speaker(10), 4);
        assert_eq!(held_out_per_speaker(5), 2);
    }

    #[test]
    fn rejects_single_speaker() {
        assert!(matches!(synth_corpus(1, 10, 0.5, 0), Err(Error::Usage(_))));
    }
}
