use super::VolumeError;

/// Meaning of a volume's channels, recorded in the NVOL header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum ChannelLayout {
    #[default]
    Generic,
    /// Four MRI modalities in the fixed order T1, T1ce, T2, FLAIR.
    Modalities,
    Mask,
    ErrorMap,
    Labels,
}

impl ChannelLayout {
    pub const MODALITY_NAMES: [&'static str; 4] = ["T1", "T1ce", "T2", "FLAIR"];

    pub fn tag(self) -> u32 {
        match self {
            Self::Generic => 0,
            Self::Modalities => 1,
            Self::Mask => 2,
            Self::ErrorMap => 3,
            Self::Labels => 4,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self, VolumeError> {
        Ok(match tag {
            0 => Self::Generic,
            1 => Self::Modalities,
            2 => Self::Mask,
            3 => Self::ErrorMap,
            4 => Self::Labels,
            t => return Err(VolumeError::UnknownLayout(t)),
        })
    }
}

fn check_spacing(spacing: [f64; 3]) -> Result<(), VolumeError> {
    if spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(VolumeError::InvalidSpacing(spacing))
    }
}

fn voxels(dims: [usize; 3]) -> usize {
    dims.iter().product()
}

/// Multi-channel 3-d float field, channel-major (`[C, D, H, W]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    channels: usize,
    dims: [usize; 3],
    spacing: [f64; 3],
    layout: ChannelLayout,
    data: Vec<f32>,
}

impl Volume {
    pub fn new(channels: usize, dims: [usize; 3], spacing: [f64; 3], data: Vec<f32>) -> Result<Self, VolumeError> {
        Self::with_layout(channels, dims, spacing, ChannelLayout::Generic, data)
    }

    pub fn with_layout(
        channels: usize,
        dims: [usize; 3],
        spacing: [f64; 3],
        layout: ChannelLayout,
        data: Vec<f32>,
    ) -> Result<Self, VolumeError> {
        check_spacing(spacing)?;
        if channels == 0 || dims.contains(&0) {
            return Err(VolumeError::Shape(format!("empty volume {channels}×{dims:?}")));
        }
        if data.len() != channels * voxels(dims) {
            return Err(VolumeError::Shape(format!(
                "{} values for {channels}×{dims:?}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(VolumeError::NonFinite);
        }
        Ok(Self { channels, dims, spacing, layout, data })
    }

    pub fn zeros(channels: usize, dims: [usize; 3], spacing: [f64; 3]) -> Result<Self, VolumeError> {
        Self::new(channels, dims, spacing, vec![0.0; channels * voxels(dims)])
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn layout(&self) -> ChannelLayout {
        self.layout
    }

    pub fn set_layout(&mut self, layout: ChannelLayout) {
        self.layout = layout;
    }

    pub fn voxels(&self) -> usize {
        voxels(self.dims)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.voxels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    /// Copies one channel out as a single-channel volume.
    pub fn extract_channel(&self, c: usize) -> Result<Volume, VolumeError> {
        if c >= self.channels {
            return Err(VolumeError::InvalidArgument(format!("channel {c} of {}", self.channels)));
        }
        Volume::new(1, self.dims, self.spacing, self.channel(c).to_vec())
    }
}

/// Binary 3-d mask with values in {0, 1}.
#[derive(Clone, Debug, PartialEq)]
pub struct SegMask {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<u8>,
}

impl SegMask {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<u8>) -> Result<Self, VolumeError> {
        check_spacing(spacing)?;
        if data.len() != voxels(dims) || dims.contains(&0) {
            return Err(VolumeError::Shape(format!("{} values for mask {dims:?}", data.len())));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(VolumeError::NotBinary(format!("value {v}")));
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self, VolumeError> {
        Self::new(dims, spacing, vec![0; voxels(dims)])
    }

    /// Reads a single-channel volume whose values are exactly 0.0 or 1.0.
    pub fn from_volume(v: &Volume) -> Result<Self, VolumeError> {
        if v.channels() != 1 {
            return Err(VolumeError::Shape(format!("mask volume has {} channels", v.channels())));
        }
        let data = v
            .data()
            .iter()
            .map(|&x| match x {
                0.0 => Ok(0),
                1.0 => Ok(1),
                x => Err(VolumeError::NotBinary(format!("value {x}"))),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        Self::new(v.dims(), v.spacing(), data)
    }

    pub fn to_volume(&self) -> Volume {
        let data = self.data.iter().map(|&v| v as f32).collect();
        Volume::with_layout(1, self.dims, self.spacing, ChannelLayout::Mask, data).expect("mask invariants imply volume invariants")
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn voxels(&self) -> usize {
        self.data.len()
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> u8 {
        self.data[(z * self.dims[1] + y) * self.dims[2] + x]
    }

    pub fn same_grid(&self, other: &SegMask) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }
}

/// Non-negative integer label field (multi-class annotations).
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub data: Vec<u32>,
}

impl LabelVolume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<u32>) -> Result<Self, VolumeError> {
        check_spacing(spacing)?;
        if data.len() != voxels(dims) {
            return Err(VolumeError::Shape(format!("{} labels for {dims:?}", data.len())));
        }
        Ok(Self { dims, spacing, data })
    }

    /// Interprets a single-channel volume as labels; values must be non-negative integers.
    pub fn from_volume(v: &Volume) -> Result<Self, VolumeError> {
        if v.channels() != 1 {
            return Err(VolumeError::Shape(format!("label volume has {} channels", v.channels())));
        }
        let data = v
            .data()
            .iter()
            .map(|&x| {
                if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f32 {
                    Ok(x as u32)
                } else {
                    Err(VolumeError::InvalidArgument(format!("label value {x} is not a non-negative integer")))
                }
            })
            .collect::<Result<_, _>>()?;
        Self::new(v.dims(), v.spacing(), data)
    }
}

/// One subject: a four-channel image and its binary ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub id: String,
    pub image: Volume,
    pub mask: SegMask,
}

impl DatasetRecord {
    pub fn new(id: impl Into<String>, image: Volume, mask: SegMask) -> Result<Self, VolumeError> {
        if image.dims() != mask.dims() || image.spacing() != mask.spacing() {
            return Err(VolumeError::Shape(format!(
                "image grid {:?}/{:?} vs mask grid {:?}/{:?}",
                image.dims(),
                image.spacing(),
                mask.dims(),
                mask.spacing()
            )));
        }
        Ok(Self { id: id.into(), image, mask })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_invariants_enforced() {
        assert!(Volume::new(1, [2, 2, 2], [1.0, 1.0, 0.0], vec![0.0; 8]).is_err());
        assert!(Volume::new(1, [2, 2, 2], [1.0; 3], vec![0.0; 7]).is_err());
        assert!(matches!(Volume::new(1, [1, 1, 2], [1.0; 3], vec![0.0, f32::NAN]), Err(VolumeError::NonFinite)));
    }

    #[test]
    fn mask_must_be_binary() {
        assert!(SegMask::new([1, 1, 2], [1.0; 3], vec![0, 2]).is_err());
        let v = Volume::new(1, [1, 1, 2], [1.0; 3], vec![0.0, 0.5]).unwrap();
        assert!(matches!(SegMask::from_volume(&v), Err(VolumeError::NotBinary(_))));
    }

    #[test]
    fn record_grids_must_agree() {
        let img = Volume::zeros(4, [2, 2, 2], [1.0; 3]).unwrap();
        let m = SegMask::zeros([2, 2, 2], [1.0, 1.0, 2.0]).unwrap();
        assert!(DatasetRecord::new("a", img, m).is_err());
    }
}
