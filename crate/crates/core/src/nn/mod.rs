//! Minimal differentiable kernels for the segmentation and denoising networks.
//!
//! Every operation comes as an explicit forward/backward pair; there is no
//! tape. Networks record whatever they need during forward and call the
//! matching backward functions in reverse order.

mod activation;
mod adam;
pub mod checkpoint;
mod conv;
pub mod gradcheck;
mod linear;
mod loss;
mod norm;
mod params;
mod pool;
mod scalar;
mod tensor;

pub use activation::{
    add_channel_bias, channel_bias_backward, concat_channels, concat_channels_backward, relu,
    relu_backward, sigmoid, sigmoid_backward, softmax_channel, softmax_channel_backward,
};
pub use adam::{AdamConfig, AdamState};
pub use conv::{
    conv3d, conv3d_backward, conv_transpose3d, conv_transpose3d_backward, ConvGeom, ConvGrads,
};
pub use linear::{linear, linear_backward, LinearGrads};
pub use loss::{bce, dice_loss, mse, soft_dice_loss, Loss, BCE_EPS};
pub use norm::{instance_norm, instance_norm_backward, INSTANCE_NORM_EPS};
pub use params::{Param, ParamId, ParamSet};
pub use pool::{maxpool3d, maxpool3d_backward, PoolIndices};
pub use scalar::Scalar;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("checkpoint: bad magic bytes")]
    BadMagic,
    #[error("checkpoint: unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint: element type tag {found} does not match expected {expected}")]
    DtypeMismatch { expected: u32, found: u32 },
    #[error("checkpoint: truncated payload")]
    Truncated,
    #[error("checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
