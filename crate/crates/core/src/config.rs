//! Run configuration: one TOML file with a section per pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionConfig;
use crate::unet::{TrainConfig, UNet3DConfig};
use crate::volume::{PhantomConfig, ResizeMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub unet: UNetSection,
    #[serde(default)]
    pub initial: InitialMaskConfig,
    #[serde(default)]
    pub diffusion: DiffusionConfig,
    #[serde(default)]
    pub refine: RefineConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// External manifest to preprocess instead of the synthesized set
    /// (relative paths resolve against the config file's directory).
    pub manifest: Option<PathBuf>,
    /// Records to synthesize.
    pub records: usize,
    /// The last `holdout` records are kept out of training and used by refine/eval.
    pub holdout: usize,
    pub phantom: PhantomConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { manifest: None, records: 60, holdout: 10, phantom: PhantomConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Slices removed from the start of the depth axis.
    pub drop_top: usize,
    /// Slices removed from the end of the depth axis.
    pub drop_bottom: usize,
    pub clip_low: f64,
    pub clip_high: f64,
    /// `[D, H, W]` after centre crop and resize.
    pub target_dims: [usize; 3],
    pub image_resize: ResizeMode,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            drop_top: 26,
            drop_bottom: 80,
            clip_low: 1.0,
            clip_high: 99.0,
            target_dims: [78, 120, 120],
            image_resize: ResizeMode::Trilinear,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UNetSection {
    pub network: UNet3DConfig,
    pub train: TrainConfig,
}

impl Default for UNetSection {
    fn default() -> Self {
        Self { network: UNet3DConfig::segmentation_full_depth(), train: TrainConfig::default() }
    }
}

/// Where the masks that the diffusion stage corrects come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialMaskSource {
    /// Predictions of the trained segmentation U-Net.
    #[default]
    Unet,
    /// Ground truth shrunk by 6-connected erosion, a controlled degradation.
    ErodedTruth,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialMaskConfig {
    pub source: InitialMaskSource,
    pub erode_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    /// Write grayscale PGM slices of image, masks and error maps.
    pub dump_slices: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { dump_slices: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Report file names, written inside `<out>/eval/`.
    pub initial_report: String,
    pub corrected_report: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { initial_report: "initial.csv".into(), corrected_report: "corrected.csv".into() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse { path: PathBuf::new(), msg: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config file; a relative `data.manifest` is
    /// resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse { msg, .. } => ConfigError::Parse { path: path.into(), msg },
            other => other,
        })?;
        if let Some(m) = &cfg.data.manifest {
            if m.is_relative() {
                cfg.data.manifest = Some(path.parent().unwrap_or(Path::new(".")).join(m));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.data.manifest.is_none() {
            self.data.phantom.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.data.records == 0 {
            return bad("data.records must be positive".into());
        }
        let p = &self.preprocess;
        if !(0.0..100.0).contains(&p.clip_low) || !(p.clip_low < p.clip_high && p.clip_high <= 100.0) {
            return bad(format!("preprocess clip band ({}, {})", p.clip_low, p.clip_high));
        }
        if p.target_dims.contains(&0) {
            return bad("preprocess.target_dims must be positive".into());
        }
        self.unet.network.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.unet.network.out_channels != 2 || self.unet.network.use_time_embedding {
            return bad("unet.network must have 2 outputs and no time embedding".into());
        }
        if self.unet.train.batch_size == 0 || self.unet.train.log_every == 0 {
            return bad("unet.train batch_size and log_every must be positive".into());
        }
        self.diffusion.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.diffusion.denoiser.in_channels != self.unet.network.in_channels + 1 {
            return bad("diffusion.denoiser.in_channels must be the image channel count plus one".into());
        }
        if self.initial.source == InitialMaskSource::ErodedTruth && self.initial.erode_iterations == 0 {
            return bad("initial.erode_iterations must be positive for eroded-truth masks".into());
        }
        Ok(())
    }
}
