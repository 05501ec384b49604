//! Network building blocks.

mod dconv;
mod hier;
pub mod init;
mod pool;
mod se;

pub use dconv::{attention_hidden, DconvBlock, KernelAttention, StaticConvBlock};
pub use hier::HierResBlock;
pub use init::Linear;
pub use pool::AttentiveStatsPool;
pub use se::SqueezeExcite;
