//! Audio ingestion, log-mel features, augmentation and the synthetic corpus.

mod augment;
mod config;
pub mod corpus;
mod mel;
mod wav;

pub use augment::{add_noise, crop_segment, spec_augment, MaskRect};
pub use config::{AugmentKind, AugmentSpec, FeatureConfig};
pub use corpus::{speaker_profile, synth_corpus, SpeakerProfile, SynthCorpus};
pub use mel::{cmvn_freq, hz_to_mel, log_mel, mel_to_hz, FeatureExtractor, MelFilterbank, LOG_FLOOR};
pub use wav::{decode_wav, encode_wav_pcm16, resample_linear, wav_read, wav_write, Utterance};
