pub mod config;
pub mod diffusion;
pub mod errormap;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod stats;
pub mod unet;
pub mod volume;
