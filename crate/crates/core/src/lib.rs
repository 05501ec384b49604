//! Dynamic-kernel convolutional speaker verification.
//!
//! The crate is layered bottom-up:
//!
//! * [`numerics`]: a small dense tensor type with reverse-mode autodiff,
//!   the primitive ops the network needs, and Adam.
//! * [`frontend`]: WAV ingestion, log-Mel features, normalisation,
//!   augmentation and a synthetic speaker corpus.
//! * [`blocks`]: dynamic convolution, squeeze-excitation, the hierarchical
//!   residual block and attentive statistics pooling.
//! * [`model`]: preset architectures, parameter/FLOP accounting and
//!   checkpoints.
//! * [`train`]: cross-entropy training with a warm-up learning-rate ramp.
//! * [`eval`]: cosine scoring, EER, minDCF and DET points.
//! * [`pipeline`]: the file-level commands driven by the `dconv` binary.

pub mod blocks;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod seeding;
pub mod train;

pub use error::{Error, Result};
pub use numerics::Tensor;

/// Version of the checkpoint container written by [`model::save_checkpoint`].
pub const CHECKPOINT_VERSION: u32 = 1;
/// Version of the text formats (scores, trials, reports, embeddings).
pub const FORMAT_VERSION: u32 = 1;
