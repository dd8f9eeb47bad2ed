//! Conditional denoising diffusion over error maps: noise schedule, forward
//! and reverse processes, training objectives and the training loop.

mod loss;
mod process;
mod schedule;
mod train;

pub use loss::{bce_entropy_floor, concatdiff_loss, loss_grad_suite, LossInputs, LossMode};
pub use process::{
    make_conditioned_input, p_sample_step, q_sample, run_chain, sample_error_map, x0_from_eps, NoisePredictor,
    ReverseNoise, Sampler, TrueNoiseOracle,
};
pub use schedule::Schedule;
pub use train::{train_diffusion, DiffusionLogRow, DiffusionReport, DiffusionSample};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::errormap::{CorrectionSign, ErrorMapError};
use crate::nn::NnError;
use crate::unet::{UNet3DConfig, UNetError};

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("timestep {t} outside 1..={max}")]
    Timestep { t: usize, max: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid diffusion config: {0}")]
    Config(String),
    #[error("non-finite values: {0}")]
    NonFinite(String),
    #[error("empty training set")]
    EmptyDataset,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    UNet(#[from] UNetError),
    #[error(transparent)]
    ErrorMap(#[from] ErrorMapError),
}

/// Schedule, objective, optimizer and denoiser settings for the diffusion stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub loss_mode: LossMode,
    /// Weight λ of the Dice term in the paper loss modes.
    pub dice_weight: f64,
    pub dice_smooth: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub log_every: usize,
    pub correction: CorrectionSign,
    pub sampler: Sampler,
    pub denoiser: UNet3DConfig,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            timesteps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            loss_mode: LossMode::default(),
            dice_weight: 1.0,
            dice_smooth: 1.0,
            learning_rate: 3e-4,
            weight_decay: 1e-5,
            steps: 2000,
            batch_size: 2,
            log_every: 10,
            correction: CorrectionSign::Minus,
            sampler: Sampler::default(),
            denoiser: UNet3DConfig::denoiser(),
        }
    }
}

impl DiffusionConfig {
    /// Settings of `configs/desk.toml`: 200 steps ending at ᾱ_T ≈ 0.016,
    /// eps-mse training and the clipped sampler.
    pub fn desk() -> Self {
        Self {
            timesteps: 200,
            beta_start: 5e-4,
            beta_end: 0.04,
            loss_mode: LossMode::EpsMse,
            learning_rate: 1e-3,
            steps: 5000,
            sampler: Sampler { noise: ReverseNoise::SqrtBeta, clip_denoised: true },
            ..Self::default()
        }
    }

    pub fn schedule(&self) -> Result<Schedule, DiffusionError> {
        Schedule::linear(self.timesteps, self.beta_start, self.beta_end)
    }

    pub fn validate(&self) -> Result<(), DiffusionError> {
        self.schedule()?;
        self.denoiser.validate()?;
        if !self.denoiser.use_time_embedding || self.denoiser.out_channels != 1 {
            return Err(DiffusionError::Config("denoiser needs a time embedding and one output channel".into()));
        }
        if self.batch_size == 0 || self.log_every == 0 {
            return Err(DiffusionError::Config("batch_size and log_every must be positive".into()));
        }
        if !(self.dice_weight >= 0.0 && self.learning_rate >= 0.0 && self.weight_decay >= 0.0) {
            return Err(DiffusionError::Config("weights and rates must be non-negative".into()));
        }
        Ok(())
    }
}
