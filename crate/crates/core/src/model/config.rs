use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 5] = ["dconv3-small", "dconv3", "dconv4-small", "dconv4", "dconv5"];

const PRESETS: [(&str, &str); 5] = [
    ("dconv3-small", include_str!("../../../../presets/dconv3-small.toml")),
    ("dconv3", include_str!("../../../../presets/dconv3.toml")),
    ("dconv4-small", include_str!("../../../../presets/dconv4-small.toml")),
    ("dconv4", include_str!("../../../../presets/dconv4.toml")),
    ("dconv5", include_str!("../../../../presets/dconv5.toml")),
];

/// Architecture of an embedding extractor.
///
/// Layer 0 is the dynamic-convolution stem, layers `1..L-1` are hierarchical
/// residual blocks, and the last layer is the kernel-1 aggregation layer that
/// maps the concatenated stem and block outputs to `mfa_channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub layer_channels: Vec<usize>,
    pub kernel_sizes: Vec<usize>,
    pub dilations: Vec<usize>,
    pub mfa_channels: usize,
    /// Kernels per dynamic convolution in the stem and blocks.
    pub kernels: usize,
    /// Kernels in the aggregation layer (1 = static).
    #[serde(default = "one")]
    pub mfa_kernels: usize,
    pub scale: usize,
    #[serde(default = "eight")]
    pub se_reduction: usize,
    #[serde(default = "four")]
    pub kernel_att_reduction: usize,
    #[serde(default = "att_default")]
    pub att_channels: usize,
    #[serde(default = "emb_default")]
    pub embedding_dim: usize,
    #[serde(default = "mels_default")]
    pub n_mels: usize,
    #[serde(default = "tau_default")]
    pub temperature: f64,
}

fn one() -> usize {
    1
}
fn four() -> usize {
    4
}
fn eight() -> usize {
    8
}
fn att_default() -> usize {
    128
}
fn emb_default() -> usize {
    192
}
fn mels_default() -> usize {
    80
}
fn tau_default() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                Error::Usage(format!("unknown preset `{name}`; valid presets: {}", PRESET_NAMES.join(", ")))
            })?;
        Self::from_toml(text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("model config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model config serialises")
    }

    /// SHA-256 of the canonical TOML text.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }

    /// The small test-scale architecture: 64 channels, two kernels, scale 2.
    pub fn tiny() -> Self {
        Self {
            name: "tiny".into(),
            layer_channels: vec![64, 64, 64],
            kernel_sizes: vec![5, 3, 1],
            dilations: vec![1, 2, 1],
            mfa_channels: 64,
            kernels: 2,
            mfa_kernels: 1,
            scale: 2,
            se_reduction: 8,
            kernel_att_reduction: 4,
            att_channels: 128,
            embedding_dim: 192,
            n_mels: 80,
            temperature: 1.0,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.layer_channels.len()
    }

    /// Frame-level width of the stem and the residual blocks.
    pub fn block_channels(&self) -> usize {
        self.layer_channels[0]
    }

    /// Input width of the aggregation layer.
    pub fn concat_channels(&self) -> usize {
        self.block_channels() * (self.n_layers() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.layer_channels.len();
        if l < 3 {
            return Err(Error::Config(format!("need at least 3 layers (stem, block, aggregation), got {l}")));
        }
        if self.kernel_sizes.len() != l || self.dilations.len() != l {
            return Err(Error::Config(format!(
                "layer lists disagree: {} channels, {} kernel sizes, {} dilations",
                l,
                self.kernel_sizes.len(),
                self.dilations.len()
            )));
        }
        let c = self.layer_channels[0];
        if self.layer_channels[..l - 1].iter().any(|&x| x != c) {
            return Err(Error::Config(format!(
                "stem and residual blocks must share one width, got {:?}",
                &self.layer_channels[..l - 1]
            )));
        }
        if self.layer_channels[l - 1] != self.mfa_channels {
            return Err(Error::Config(format!(
                "last layer width {} differs from mfa_channels {}",
                self.layer_channels[l - 1],
                self.mfa_channels
            )));
        }
        if self.kernel_sizes[l - 1] != 1 {
            return Err(Error::Config("the aggregation layer must use kernel size 1".into()));
        }
        if self.kernel_sizes.iter().any(|k| k % 2 == 0) || self.dilations.contains(&0) {
            return Err(Error::Config("kernel sizes must be odd and dilations positive".into()));
        }
        if self.kernels == 0 || self.mfa_kernels == 0 {
            return Err(Error::Config("kernel counts must be at least 1".into()));
        }
        if self.scale == 0 || c % self.scale != 0 {
            return Err(Error::Config(format!("{c} channels cannot be split into {} groups", self.scale)));
        }
        if self.se_reduction == 0 || c / self.se_reduction == 0 {
            return Err(Error::Config(format!("se_reduction {} too large for {c} channels", self.se_reduction)));
        }
        if self.kernel_att_reduction == 0 || self.att_channels == 0 || self.embedding_dim == 0 || self.n_mels == 0 {
            return Err(Error::Config("widths and reductions must be positive".into()));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }
}
