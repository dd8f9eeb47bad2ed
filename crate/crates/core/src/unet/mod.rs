//! 3-d U-Net used both for the initial segmentation and as the noise
//! predictor of the diffusion stage (the latter with a timestep embedding).

mod net;
mod train;

pub use net::{grad_check_network, sinusoidal_embedding, ForwardCache, UNet3D};
pub use train::{image_batch, predict_initial_mask, train_unet, TrainConfig, TrainLogRow, TrainReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::NnError;
use crate::volume::VolumeError;

#[derive(Debug, Error)]
pub enum UNetError {
    #[error("invalid U-Net config: {0}")]
    Config(String),
    #[error("input mismatch: {0}")]
    Input(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },
    #[error("empty training set")]
    EmptyDataset,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UNet3DConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_channels: usize,
    /// Resolution steps; the encoder pools `levels - 1` times.
    pub levels: usize,
    #[serde(default)]
    pub use_time_embedding: bool,
    #[serde(default = "default_time_dim")]
    pub time_embed_dim: usize,
    #[serde(default)]
    pub instance_norm: bool,
}

fn default_time_dim() -> usize {
    32
}

impl Default for UNet3DConfig {
    fn default() -> Self {
        Self::segmentation()
    }
}

impl UNet3DConfig {
    /// Desk-scale segmentation net: 4 modalities in, background/tumour logits out.
    pub fn segmentation() -> Self {
        Self {
            in_channels: 4,
            out_channels: 2,
            base_channels: 8,
            levels: 3,
            use_time_embedding: false,
            time_embed_dim: 32,
            instance_norm: false,
        }
    }

    /// Four resolution steps as in the reference architecture.
    pub fn segmentation_full_depth() -> Self {
        Self { levels: 4, ..Self::segmentation() }
    }

    /// Noise predictor: 4 conditioning channels plus the noisy error map in, one channel out.
    pub fn denoiser() -> Self {
        Self { in_channels: 5, out_channels: 1, use_time_embedding: true, instance_norm: true, ..Self::segmentation() }
    }

    pub fn validate(&self) -> Result<(), UNetError> {
        let bad = |m: &str| Err(UNetError::Config(m.to_string()));
        if self.levels == 0 {
            return bad("levels must be at least 1");
        }
        if self.levels > 8 {
            return bad("levels above 8 are not supported");
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.base_channels == 0 {
            return bad("channel counts must be positive");
        }
        if self.use_time_embedding && (self.time_embed_dim < 2 || !self.time_embed_dim.is_multiple_of(2)) {
            return bad("time_embed_dim must be a positive even number");
        }
        Ok(())
    }

    /// Feature width at resolution level `i`.
    pub fn width(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Spatial extents must be multiples of this (inputs are zero-padded up to it).
    pub fn spatial_multiple(&self) -> usize {
        1 << (self.levels - 1)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, UNetError> {
        toml::from_str(text).map_err(|e| UNetError::Config(e.to_string()))
    }
}
