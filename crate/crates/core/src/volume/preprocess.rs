use serde::{Deserialize, Serialize};

use super::{ChannelLayout, LabelVolume, SegMask, Volume, VolumeError};
use crate::stats::percentile_sorted;

/// Clamps every channel to its `[p_low, p_high]` percentile band.
/// Percentiles are taken over all voxels of the channel.
pub fn clip_percentiles(v: &Volume, p_low: f64, p_high: f64) -> Result<Volume, VolumeError> {
    if !(0.0..100.0).contains(&p_low) || !(p_low < p_high && p_high <= 100.0) {
        return Err(VolumeError::InvalidArgument(format!("percentiles ({p_low}, {p_high})")));
    }
    let mut data = Vec::with_capacity(v.data().len());
    let mut sorted = Vec::with_capacity(v.voxels());
    for c in 0..v.channels() {
        let ch = v.channel(c);
        sorted.clear();
        sorted.extend(ch.iter().map(|&x| x as f64));
        sorted.sort_by(f64::total_cmp);
        let lo = percentile_sorted(&sorted, p_low).expect("non-empty channel");
        let hi = percentile_sorted(&sorted, p_high).expect("non-empty channel");
        data.extend(ch.iter().map(|&x| (x as f64).clamp(lo, hi) as f32));
    }
    Volume::with_layout(v.channels(), v.dims(), v.spacing(), v.layout(), data)
}

/// Drops `drop_top` slices from the start and `drop_bottom` from the end of the depth axis.
pub fn trim_axial(v: &Volume, drop_top: usize, drop_bottom: usize) -> Result<Volume, VolumeError> {
    let [d, h, w] = v.dims();
    if drop_top + drop_bottom >= d {
        return Err(VolumeError::InvalidArgument(format!(
            "cannot drop {drop_top} + {drop_bottom} slices from depth {d}"
        )));
    }
    let keep = d - drop_top - drop_bottom;
    let plane = h * w;
    let mut data = Vec::with_capacity(v.channels() * keep * plane);
    for c in 0..v.channels() {
        let ch = v.channel(c);
        data.extend_from_slice(&ch[drop_top * plane..(drop_top + keep) * plane]);
    }
    Volume::with_layout(v.channels(), [keep, h, w], v.spacing(), v.layout(), data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeMode {
    Trilinear,
    Nearest,
}

/// Crops a centred box of `extent` voxels (clamped to the source size).
pub fn center_crop(v: &Volume, extent: [usize; 3]) -> Result<Volume, VolumeError> {
    if extent.contains(&0) {
        return Err(VolumeError::InvalidArgument(format!("crop extent {extent:?}")));
    }
    let src = v.dims();
    let size: [usize; 3] = std::array::from_fn(|a| extent[a].min(src[a]));
    let start: [usize; 3] = std::array::from_fn(|a| (src[a] - size[a]) / 2);
    let mut data = Vec::with_capacity(v.channels() * size.iter().product::<usize>());
    for c in 0..v.channels() {
        let ch = v.channel(c);
        for z in start[0]..start[0] + size[0] {
            for y in start[1]..start[1] + size[1] {
                let row = (z * src[1] + y) * src[2];
                data.extend_from_slice(&ch[row + start[2]..row + start[2] + size[2]]);
            }
        }
    }
    Volume::with_layout(v.channels(), size, v.spacing(), v.layout(), data)
}

/// Source coordinate of output sample `i` (pixel-centre alignment).
fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64)
}

fn nearest_index(i: usize, n_in: usize, n_out: usize) -> usize {
    (((i as f64 + 0.5) * n_in as f64 / n_out as f64).floor() as usize).min(n_in - 1)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Resamples to exactly `target` voxels. Spacing is rescaled so the physical
/// extent is preserved.
fn resize(v: &Volume, target: [usize; 3], mode: ResizeMode) -> Volume {
    let src = v.dims();
    if src == target {
        return v.clone();
    }
    let spacing: [f64; 3] = std::array::from_fn(|a| v.spacing()[a] * src[a] as f64 / target[a] as f64);
    let mut data = Vec::with_capacity(v.channels() * target.iter().product::<usize>());
    let at = |ch: &[f32], z: usize, y: usize, x: usize| ch[(z * src[1] + y) * src[2] + x] as f64;
    for c in 0..v.channels() {
        let ch = v.channel(c);
        for z in 0..target[0] {
            for y in 0..target[1] {
                for x in 0..target[2] {
                    let value = match mode {
                        ResizeMode::Nearest => at(
                            ch,
                            nearest_index(z, src[0], target[0]),
                            nearest_index(y, src[1], target[1]),
                            nearest_index(x, src[2], target[2]),
                        ),
                        ResizeMode::Trilinear => {
                            let (fz, fy, fx) = (
                                source_coord(z, src[0], target[0]),
                                source_coord(y, src[1], target[1]),
                                source_coord(x, src[2], target[2]),
                            );
                            let (z0, y0, x0) = (fz as usize, fy as usize, fx as usize);
                            let (z1, y1, x1) = ((z0 + 1).min(src[0] - 1), (y0 + 1).min(src[1] - 1), (x0 + 1).min(src[2] - 1));
                            let (tz, ty, tx) = (fz - z0 as f64, fy - y0 as f64, fx - x0 as f64);
                            let plane = |zz| {
                                lerp(
                                    lerp(at(ch, zz, y0, x0), at(ch, zz, y0, x1), tx),
                                    lerp(at(ch, zz, y1, x0), at(ch, zz, y1, x1), tx),
                                    ty,
                                )
                            };
                            lerp(plane(z0), plane(z1), tz)
                        }
                    };
                    data.push(value as f32);
                }
            }
        }
    }
    Volume::with_layout(v.channels(), target, spacing, v.layout(), data).expect("resampling keeps values finite")
}

/// Centre-crops to the aspect ratio of `target`, then resamples to `target`.
///
/// The crop keeps the largest centred box whose per-axis extents are a common
/// multiple of `target`, so no axis is stretched relative to another.
pub fn center_crop_resize(v: &Volume, target: [usize; 3], mode: ResizeMode) -> Result<Volume, VolumeError> {
    if target.contains(&0) {
        return Err(VolumeError::InvalidArgument(format!("target dims {target:?}")));
    }
    let src = v.dims();
    let scale = (0..3).map(|a| src[a] as f64 / target[a] as f64).fold(f64::INFINITY, f64::min);
    let crop: [usize; 3] = std::array::from_fn(|a| ((target[a] as f64 * scale).round() as usize).clamp(1, src[a]));
    let cropped = center_crop(v, crop)?;
    Ok(resize(&cropped, target, mode))
}

/// Collapses every non-zero label into the single foreground class.
pub fn merge_labels(labels: &LabelVolume) -> SegMask {
    let data = labels.data.iter().map(|&l| (l > 0) as u8).collect();
    SegMask::new(labels.dims, labels.spacing, data).expect("label invariants imply mask invariants")
}

/// Stacks T1, T1ce, T2 and FLAIR (in that order) along the channel axis.
pub fn stack_modalities(mods: [&Volume; 4]) -> Result<Volume, VolumeError> {
    let first = mods[0];
    for (k, m) in mods.iter().enumerate() {
        if m.channels() != 1 {
            return Err(VolumeError::Shape(format!("modality {k} has {} channels", m.channels())));
        }
        if m.dims() != first.dims() || m.spacing() != first.spacing() {
            return Err(VolumeError::Shape(format!(
                "modality {k} grid {:?}/{:?} differs from {:?}/{:?}",
                m.dims(),
                m.spacing(),
                first.dims(),
                first.spacing()
            )));
        }
    }
    let data = mods.iter().flat_map(|m| m.data().iter().copied()).collect();
    Volume::with_layout(4, first.dims(), first.spacing(), ChannelLayout::Modalities, data)
}
