use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ChannelLayout, DatasetRecord, SegMask, Volume, VolumeError};

/// Settings for procedurally generated four-channel lesion phantoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    /// `[D, H, W]` in voxels.
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    /// Inclusive range of lesion counts.
    pub num_lesions: [usize; 2],
    /// Range of per-axis ellipsoid semi-axes, in millimetres.
    pub lesion_radius_mm: [f64; 2],
    /// Per-channel background intensity (T1, T1ce, T2, FLAIR).
    pub background: [f32; 4],
    /// Per-channel intensity offset inside lesions.
    pub contrast: [f32; 4],
    pub noise_sigma: f32,
    /// Taken from the run seed rather than from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            dims: [16, 32, 32],
            spacing_mm: [1.0; 3],
            num_lesions: [1, 3],
            lesion_radius_mm: [4.0, 7.0],
            background: [0.6, 0.5, 0.4, 0.3],
            contrast: [-0.3, 0.8, 0.5, 0.7],
            noise_sigma: 0.15,
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<(), VolumeError> {
        let bad = |m: String| Err(VolumeError::InvalidArgument(m));
        if self.dims.contains(&0) {
            return bad(format!("phantom dims {:?}", self.dims));
        }
        if !self.spacing_mm.iter().all(|&s| s.is_finite() && s > 0.0) {
            return Err(VolumeError::InvalidSpacing(self.spacing_mm));
        }
        if self.num_lesions[0] > self.num_lesions[1] {
            return bad(format!("lesion count range {:?} is empty", self.num_lesions));
        }
        let [rmin, rmax] = self.lesion_radius_mm;
        if !(rmin > 0.0 && rmin <= rmax && rmax.is_finite()) {
            return bad(format!("lesion radius range {:?}", self.lesion_radius_mm));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {}", self.noise_sigma));
        }
        for a in 0..3 {
            let extent = self.dims[a] as f64 * self.spacing_mm[a];
            if 2.0 * rmax > extent {
                return bad(format!(
                    "lesion radius {rmax} mm does not fit axis {a} extent {extent} mm"
                ));
            }
        }
        Ok(())
    }
}

struct Ellipsoid {
    center: [f64; 3],
    radii: [f64; 3],
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).map(|a| ((p[a] - self.center[a]) / self.radii[a]).powi(2)).sum::<f64>() <= 1.0
    }
}

/// Generates one subject. Record `index` draws from its own RNG stream so
/// datasets can be generated in any order.
pub fn synth_phantom(cfg: &PhantomConfig, index: u64) -> Result<DatasetRecord, VolumeError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let [d, h, w] = cfg.dims;
    let s = cfg.spacing_mm;
    let extent: [f64; 3] = std::array::from_fn(|a| cfg.dims[a] as f64 * s[a]);

    let count = rng.gen_range(cfg.num_lesions[0]..=cfg.num_lesions[1]);
    let lesions: Vec<Ellipsoid> = (0..count)
        .map(|_| {
            let radii: [f64; 3] = std::array::from_fn(|_| {
                let [lo, hi] = cfg.lesion_radius_mm;
                if lo == hi { lo } else { rng.gen_range(lo..hi) }
            });
            let center = std::array::from_fn(|a| {
                let (lo, hi) = (radii[a], extent[a] - radii[a]);
                if lo >= hi { extent[a] / 2.0 } else { rng.gen_range(lo..hi) }
            });
            Ellipsoid { center, radii }
        })
        .collect();

    let centre = |i: usize, a: usize| (i as f64 + 0.5) * s[a];
    let mut mask = vec![0u8; d * h * w];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let p = [centre(z, 0), centre(y, 1), centre(x, 2)];
                if lesions.iter().any(|e| e.contains(p)) {
                    mask[(z * h + y) * w + x] = 1;
                }
            }
        }
    }
    // A lesion thinner than a voxel may miss every voxel centre; keep the voxel holding its centre.
    for e in &lesions {
        let idx: [usize; 3] = std::array::from_fn(|a| ((e.center[a] / s[a]) as usize).min(cfg.dims[a] - 1));
        mask[(idx[0] * h + idx[1]) * w + idx[2]] = 1;
    }

    let noise = Normal::new(0.0f32, cfg.noise_sigma.max(f32::MIN_POSITIVE)).expect("valid sigma");
    let mut image = Vec::with_capacity(4 * mask.len());
    for c in 0..4 {
        for &m in &mask {
            let mut v = cfg.background[c] + if m == 1 { cfg.contrast[c] } else { 0.0 };
            if cfg.noise_sigma > 0.0 {
                v += noise.sample(&mut rng);
            }
            image.push(v);
        }
    }
    let image = Volume::with_layout(4, cfg.dims, s, ChannelLayout::Modalities, image)?;
    let mask = SegMask::new(cfg.dims, s, mask)?;
    DatasetRecord::new(format!("phantom{index:04}"), image, mask)
}

pub fn synth_dataset(cfg: &PhantomConfig, records: usize) -> Result<Vec<DatasetRecord>, VolumeError> {
    (0..records as u64).map(|i| synth_phantom(cfg, i)).collect()
}
