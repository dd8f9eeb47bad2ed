//! Signed error maps between an initial mask and the ground truth, and the
//! correction that turns a reconstructed error map back into a mask.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::{ChannelLayout, SegMask, Volume, VolumeError};

#[derive(Debug, Error)]
pub enum ErrorMapError {
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error("value {0} is not in {{-1, 0, 1}}")]
    NotTernary(f32),
    #[error("non-finite value in continuous error field")]
    NonFinite,
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Ternary field: `+1` false positive, `-1` false negative, `0` agreement.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMap {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<i8>,
}

impl ErrorMap {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<i8>) -> Result<Self, ErrorMapError> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(ErrorMapError::Grid(format!("{} values for grid {dims:?}", data.len())));
        }
        if let Some(&v) = data.iter().find(|v| !(-1..=1).contains(*v)) {
            return Err(ErrorMapError::NotTernary(v as f32));
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3]) -> Self {
        Self { dims, spacing, data: vec![0; dims.iter().product()] }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    /// Counts of `(+1, -1)` voxels.
    pub fn counts(&self) -> (usize, usize) {
        let pos = self.data.iter().filter(|&&v| v == 1).count();
        let neg = self.data.iter().filter(|&&v| v == -1).count();
        (pos, neg)
    }

    pub fn to_volume(&self) -> Volume {
        Volume::with_layout(1, self.dims, self.spacing, ChannelLayout::ErrorMap, encode_error(self))
            .expect("error map grid is a valid volume grid")
    }

    /// Reads a one-channel volume holding exactly -1.0, 0.0 or 1.0.
    pub fn from_volume(v: &Volume) -> Result<Self, ErrorMapError> {
        if v.channels() != 1 {
            return Err(ErrorMapError::Grid(format!("error map volume has {} channels", v.channels())));
        }
        let data = v
            .data()
            .iter()
            .map(|&x| match x {
                -1.0 => Ok(-1),
                0.0 => Ok(0),
                1.0 => Ok(1),
                x => Err(ErrorMapError::NotTernary(x)),
            })
            .collect::<Result<Vec<i8>, _>>()?;
        Self::new(v.dims(), v.spacing(), data)
    }
}

/// `E = M_I - M_GT` voxel by voxel.
pub fn compute_error_map(initial: &SegMask, truth: &SegMask) -> Result<ErrorMap, ErrorMapError> {
    if !initial.same_grid(truth) {
        return Err(ErrorMapError::Grid(format!(
            "initial {:?}@{:?} vs truth {:?}@{:?}",
            initial.dims(),
            initial.spacing(),
            truth.dims(),
            truth.spacing()
        )));
    }
    let data = initial.data().iter().zip(truth.data()).map(|(&a, &b)| a as i8 - b as i8).collect();
    Ok(ErrorMap { dims: initial.dims(), spacing: initial.spacing(), data })
}

/// Embeds the ternary code into the continuous diffusion domain `[-1, 1]` unchanged.
pub fn encode_error(e: &ErrorMap) -> Vec<f32> {
    e.data.iter().map(|&v| v as f32).collect()
}

/// Nearest ternary level with cut points at `±0.5` (the cut points themselves map to 0).
pub fn decode_value(x: f32) -> i8 {
    if x > 0.5 {
        1
    } else if x < -0.5 {
        -1
    } else {
        0
    }
}

pub fn decode_error(x: &[f32], dims: [usize; 3], spacing: [f64; 3]) -> Result<ErrorMap, ErrorMapError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ErrorMapError::NonFinite);
    }
    ErrorMap::new(dims, spacing, x.iter().map(|&v| decode_value(v)).collect())
}

/// How the reconstructed error is combined with the initial mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionSign {
    /// `M_I - Ê`, the inverse of the error definition.
    #[default]
    Minus,
    /// `M_I + Ê`, the literal "added to the initial mask" reading.
    Plus,
}

/// Clamps `M_I ∓ Ê` to `[0, 1]` and thresholds at 0.5.
pub fn apply_correction(initial: &SegMask, e_hat: &ErrorMap, sign: CorrectionSign) -> Result<SegMask, ErrorMapError> {
    if initial.dims() != e_hat.dims {
        return Err(ErrorMapError::Grid(format!("mask {:?} vs error map {:?}", initial.dims(), e_hat.dims)));
    }
    let s = match sign {
        CorrectionSign::Minus => -1.0f32,
        CorrectionSign::Plus => 1.0,
    };
    let data = initial
        .data()
        .iter()
        .zip(&e_hat.data)
        .map(|(&m, &e)| {
            let raw = (m as f32 + s * e as f32).clamp(0.0, 1.0);
            u8::from(raw >= 0.5)
        })
        .collect();
    Ok(SegMask::new(initial.dims(), initial.spacing(), data)?)
}
