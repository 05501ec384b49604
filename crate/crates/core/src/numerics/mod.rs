//! Dense tensors with reverse-mode autodiff, the primitives used by the
//! network, and the Adam optimiser.

mod adam;
mod conv;
pub mod gradcheck;
mod norm;
mod ops;
mod pool;
mod tensor;

pub use adam::{adam_step, AdamState, StepReport};
pub use conv::conv1d;
pub use norm::{batch_norm, BatchNorm};
pub use ops::concat;
pub use pool::{stat_pool_moments, weighted_moments};
pub use tensor::{no_grad, Tensor};
