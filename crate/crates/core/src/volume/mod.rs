//! Volumes, masks, the NVOL container, preprocessing and synthetic phantoms.

mod dataset;
pub mod morphology;
mod nvol;
mod phantom;
mod preprocess;
mod types;

pub use dataset::{load_record, read_manifest, write_dataset, write_manifest, ManifestEntry, RecordSource};
pub use nvol::{decode_nvol, encode_nvol, load_nvol, save_nvol, NVOL_HEADER_LEN, NVOL_MAGIC, NVOL_VERSION};
pub use phantom::{synth_dataset, synth_phantom, PhantomConfig};
pub use preprocess::{
    center_crop, center_crop_resize, clip_percentiles, merge_labels, stack_modalities, trim_axial, ResizeMode,
};
pub use types::{ChannelLayout, DatasetRecord, LabelVolume, SegMask, Volume};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("bad magic bytes (not an NVOL file)")]
    BadMagic,
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("payload length mismatch: header says {expected} elements, found {found}")]
    LengthMismatch { expected: u64, found: u64 },
    #[error("unsupported NVOL version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported element type tag {0}")]
    UnsupportedDtype(u32),
    #[error("unknown channel layout tag {0}")]
    UnknownLayout(u32),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid voxel spacing {0:?}")]
    InvalidSpacing([f64; 3]),
    #[error("non-finite voxel values")]
    NonFinite,
    #[error("mask is not binary: {0}")]
    NotBinary(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("manifest {path}:{line}: {msg}")]
    Manifest { path: String, line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
