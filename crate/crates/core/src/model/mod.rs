//! Embedding-extractor assembly, accounting and checkpoints.

mod checkpoint;
mod config;
mod network;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_expecting, save_checkpoint};
pub use config::{ModelConfig, PRESET_NAMES};
pub use network::{
    build_model, count_flops, count_params, count_params_with_head, Model, SpeakerEmbedding, MIN_EMBED_FRAMES,
};
