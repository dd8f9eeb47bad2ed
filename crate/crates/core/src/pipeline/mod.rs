//! The end-to-end stages behind the command-line tool. Every stage reads and
//! writes artifacts under one output directory:
//!
//! ```text
//! <out>/data/            synthesized records + manifest.txt
//! <out>/preprocessed/    trimmed, clipped, resized records + manifest.txt
//! <out>/unet.ckpt        segmentation checkpoint, unet_log.csv
//! <out>/diffusion.ckpt   denoiser checkpoint, diffusion_log.csv
//! <out>/refine/          per holdout record: M_I, Ê (raw and decoded), M_corr, slices/
//! <out>/eval/            metric reports for M_I and M_corr against ground truth
//! ```

pub mod pgm;

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, InitialMaskSource, PreprocessConfig, RunConfig};
use crate::diffusion::{sample_error_map, train_diffusion, DiffusionError, DiffusionReport, DiffusionSample};
use crate::errormap::{apply_correction, decode_error, ErrorMap, ErrorMapError};
use crate::metrics::{evaluate_dataset, write_report_csv, EvalReport, MetricsError};
use crate::nn::NnError;
use crate::unet::{predict_initial_mask, train_unet, TrainReport, UNet3D, UNetError};
use crate::volume::morphology::erode;
use crate::volume::{
    center_crop_resize, clip_percentiles, load_nvol, load_record, read_manifest, save_nvol, synth_dataset, trim_axial,
    write_dataset, ChannelLayout, DatasetRecord, ResizeMode, SegMask, Volume, VolumeError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("missing artifact: {what} at {}", path.display())]
    MissingArtifact { what: &'static str, path: PathBuf },
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    UNet(#[from] UNetError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    ErrorMap(#[from] ErrorMapError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Process exit codes, one per failure class.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const MISSING_ARTIFACT: i32 = 4;
    pub const SHAPE: i32 = 5;
    pub const IO_FORMAT: i32 = 6;
    pub const NON_FINITE: i32 = 7;
}

fn nn_code(e: &NnError) -> i32 {
    match e {
        NnError::Shape(_) => exit_code::SHAPE,
        NnError::NonFinite(_) => exit_code::NON_FINITE,
        NnError::DuplicateParam(_) | NnError::UnknownParam(_) => exit_code::INTERNAL,
        _ => exit_code::IO_FORMAT,
    }
}

fn volume_code(e: &VolumeError) -> i32 {
    match e {
        VolumeError::Shape(_) => exit_code::SHAPE,
        VolumeError::NonFinite => exit_code::NON_FINITE,
        VolumeError::InvalidArgument(_) | VolumeError::InvalidSpacing(_) => exit_code::CONFIG,
        _ => exit_code::IO_FORMAT,
    }
}

fn unet_code(e: &UNetError) -> i32 {
    match e {
        UNetError::Config(_) => exit_code::CONFIG,
        UNetError::Input(_) => exit_code::SHAPE,
        UNetError::NonFiniteLoss { .. } => exit_code::NON_FINITE,
        UNetError::EmptyDataset => exit_code::USAGE,
        UNetError::Nn(e) => nn_code(e),
        UNetError::Volume(e) => volume_code(e),
    }
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => exit_code::CONFIG,
            Self::Usage(_) => exit_code::USAGE,
            Self::MissingArtifact { .. } => exit_code::MISSING_ARTIFACT,
            Self::Volume(e) => volume_code(e),
            Self::Nn(e) => nn_code(e),
            Self::UNet(e) => unet_code(e),
            Self::Diffusion(e) => match e {
                DiffusionError::Shape(_) | DiffusionError::Timestep { .. } => exit_code::SHAPE,
                DiffusionError::NonFinite(_) => exit_code::NON_FINITE,
                DiffusionError::Schedule(_) | DiffusionError::Config(_) => exit_code::CONFIG,
                DiffusionError::EmptyDataset => exit_code::USAGE,
                DiffusionError::Nn(e) => nn_code(e),
                DiffusionError::UNet(e) => unet_code(e),
                DiffusionError::ErrorMap(_) => exit_code::SHAPE,
            },
            Self::ErrorMap(ErrorMapError::NonFinite) => exit_code::NON_FINITE,
            Self::ErrorMap(ErrorMapError::Volume(e)) => volume_code(e),
            Self::ErrorMap(_) => exit_code::SHAPE,
            Self::Metrics(MetricsError::Io(_) | MetricsError::Csv(_) | MetricsError::Report(_)) => exit_code::IO_FORMAT,
            Self::Metrics(_) => exit_code::SHAPE,
            Self::Csv(_) | Self::Io(_) => exit_code::IO_FORMAT,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

/// Artifact locations under one output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }
    pub fn preprocessed_dir(&self) -> PathBuf {
        self.root.join("preprocessed")
    }
    pub fn unet_checkpoint(&self) -> PathBuf {
        self.root.join("unet.ckpt")
    }
    pub fn unet_log(&self) -> PathBuf {
        self.root.join("unet_log.csv")
    }
    pub fn diffusion_checkpoint(&self) -> PathBuf {
        self.root.join("diffusion.ckpt")
    }
    pub fn diffusion_log(&self) -> PathBuf {
        self.root.join("diffusion_log.csv")
    }
    pub fn refine_dir(&self) -> PathBuf {
        self.root.join("refine")
    }
    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }
}

fn require(path: PathBuf, what: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(PipelineError::MissingArtifact { what, path })
    }
}

/// Loads the manifest at `manifest`, keeping at most `limit` records.
pub fn load_manifest_records(manifest: &Path, limit: Option<usize>) -> Result<Vec<DatasetRecord>> {
    let entries = read_manifest(manifest)?;
    let n = limit.unwrap_or(entries.len()).min(entries.len());
    entries[..n].iter().map(|e| Ok(load_record(e)?)).collect()
}

/// Splits off the last `holdout` records.
pub fn split_holdout(records: &[DatasetRecord], holdout: usize) -> Result<(&[DatasetRecord], &[DatasetRecord])> {
    if holdout == 0 || holdout >= records.len() {
        return Err(PipelineError::Usage(format!(
            "holdout of {holdout} needs at least one training and one held-out record among {}",
            records.len()
        )));
    }
    Ok(records.split_at(records.len() - holdout))
}

/// Writes `cfg.data.records` (or `records`) phantoms to `<out>/data`.
pub fn synth(cfg: &RunConfig, out: &Layout, records: Option<usize>) -> Result<PathBuf> {
    let phantom = crate::volume::PhantomConfig { seed: cfg.seed, ..cfg.data.phantom.clone() };
    let recs = synth_dataset(&phantom, records.unwrap_or(cfg.data.records))?;
    Ok(write_dataset(out.data_dir(), &recs)?)
}

/// Trim, clip and crop-resize one record; the mask follows the image grid.
pub fn preprocess_record(rec: &DatasetRecord, p: &PreprocessConfig) -> Result<DatasetRecord> {
    let image = trim_axial(&rec.image, p.drop_top, p.drop_bottom)?;
    let image = clip_percentiles(&image, p.clip_low, p.clip_high)?;
    let image = center_crop_resize(&image, p.target_dims, p.image_resize)?;
    let mask = trim_axial(&rec.mask.to_volume(), p.drop_top, p.drop_bottom)?;
    let mask = center_crop_resize(&mask, p.target_dims, ResizeMode::Nearest)?;
    Ok(DatasetRecord::new(rec.id.clone(), image, SegMask::from_volume(&mask)?)?)
}

pub fn preprocess(cfg: &RunConfig, out: &Layout, records: Option<usize>) -> Result<PathBuf> {
    let manifest = match &cfg.data.manifest {
        Some(m) => require(m.clone(), "input manifest")?,
        None => require(out.data_dir().join("manifest.txt"), "synthesized dataset (run `synth` first)")?,
    };
    let recs = load_manifest_records(&manifest, records)?;
    let processed = recs.iter().map(|r| preprocess_record(r, &cfg.preprocess)).collect::<Result<Vec<_>>>()?;
    Ok(write_dataset(out.preprocessed_dir(), &processed)?)
}

/// Preprocessed records, the input to every later stage.
pub fn load_preprocessed(out: &Layout, records: Option<usize>) -> Result<Vec<DatasetRecord>> {
    let manifest = require(out.preprocessed_dir().join("manifest.txt"), "preprocessed dataset (run `preprocess` first)")?;
    load_manifest_records(&manifest, records)
}

fn write_log<R: serde::Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn train_unet_stage(cfg: &RunConfig, out: &Layout, records: Option<usize>) -> Result<TrainReport> {
    let recs = load_preprocessed(out, records)?;
    let (train, _) = split_holdout(&recs, cfg.data.holdout)?;
    let (net, report) = train_unet(train, cfg.unet.network.clone(), &cfg.unet.train, cfg.seed)?;
    net.save(out.unet_checkpoint())?;
    write_log(&out.unet_log(), &report.rows)?;
    Ok(report)
}

/// Initial masks `M_I` for `records`, from the U-Net or by eroding the truth.
pub fn initial_masks(cfg: &RunConfig, out: &Layout, records: &[DatasetRecord]) -> Result<Vec<SegMask>> {
    match cfg.initial.source {
        InitialMaskSource::Unet => {
            let path = require(out.unet_checkpoint(), "segmentation checkpoint (run `train-unet` first)")?;
            let net = UNet3D::<f32>::load(path)?;
            records.iter().map(|r| Ok(predict_initial_mask(&net, &r.image)?)).collect()
        }
        InitialMaskSource::ErodedTruth => Ok(records.iter().map(|r| erode(&r.mask, cfg.initial.erode_iterations)).collect()),
    }
}

pub fn train_diff_stage(cfg: &RunConfig, out: &Layout, records: Option<usize>) -> Result<DiffusionReport> {
    let recs = load_preprocessed(out, records)?;
    let (train, _) = split_holdout(&recs, cfg.data.holdout)?;
    let init = initial_masks(cfg, out, train)?;
    let samples: Vec<DiffusionSample> = train
        .iter()
        .zip(&init)
        .map(|(r, m)| DiffusionSample { image: &r.image, initial: m, truth: &r.mask })
        .collect();
    let (net, report) = train_diffusion(&samples, &cfg.diffusion, cfg.seed.wrapping_add(1))?;
    net.save(out.diffusion_checkpoint())?;
    write_log(&out.diffusion_log(), &report.rows)?;
    Ok(report)
}

/// Outputs of refining one record.
#[derive(Clone, Debug)]
pub struct Refined {
    pub id: String,
    pub initial: SegMask,
    pub raw_error: Vec<f32>,
    pub error: ErrorMap,
    pub corrected: SegMask,
}

/// Samples `Ê` for `image`, decodes it and corrects `initial`. `stream`
/// selects an independent random stream so records can be refined in any order.
pub fn refine_one(cfg: &RunConfig, denoiser: &UNet3D<f32>, image: &Volume, initial: &SegMask, stream: u64) -> Result<(Vec<f32>, ErrorMap, SegMask)> {
    let sched = cfg.diffusion.schedule()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    rng.set_stream(stream);
    let raw = sample_error_map(image, denoiser, &sched, cfg.diffusion.sampler, &mut rng)?;
    let error = decode_error(&raw, image.dims(), image.spacing())?;
    let corrected = apply_correction(initial, &error, cfg.diffusion.correction)?;
    Ok((raw, error, corrected))
}

pub fn refine_stage(cfg: &RunConfig, out: &Layout, records: Option<usize>) -> Result<Vec<Refined>> {
    let recs = load_preprocessed(out, records)?;
    let (_, hold) = split_holdout(&recs, cfg.data.holdout)?;
    let path = require(out.diffusion_checkpoint(), "diffusion checkpoint (run `train-diff` first)")?;
    let denoiser = UNet3D::<f32>::load(path)?;
    let init = initial_masks(cfg, out, hold)?;
    let dir = out.refine_dir();
    fs::create_dir_all(&dir)?;
    let mut results = Vec::with_capacity(hold.len());
    for (k, (rec, initial)) in hold.iter().zip(init).enumerate() {
        let (raw, error, corrected) = refine_one(cfg, &denoiser, &rec.image, &initial, k as u64)?;
        save_nvol(dir.join(format!("{}_initial.nvol", rec.id)), &initial.to_volume())?;
        let raw_vol = Volume::with_layout(1, rec.image.dims(), rec.image.spacing(), ChannelLayout::ErrorMap, raw.clone())?;
        save_nvol(dir.join(format!("{}_error_raw.nvol", rec.id)), &raw_vol)?;
        save_nvol(dir.join(format!("{}_error.nvol", rec.id)), &error.to_volume())?;
        save_nvol(dir.join(format!("{}_corrected.nvol", rec.id)), &corrected.to_volume())?;
        let r = Refined { id: rec.id.clone(), initial, raw_error: raw, error, corrected };
        if cfg.refine.dump_slices {
            dump_slices(&dir.join("slices"), rec, &r)?;
        }
        results.push(r);
    }
    Ok(results)
}

/// One PGM per axial slice: FLAIR (last channel) | truth | M_I | Ê | M_corr.
fn dump_slices(dir: &Path, rec: &DatasetRecord, r: &Refined) -> Result<()> {
    fs::create_dir_all(dir)?;
    let [d, h, w] = rec.image.dims();
    let plane = h * w;
    let img = rec.image.channel(rec.image.channels() - 1);
    let (lo, hi) = img.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mask_gray = |m: &SegMask, z: usize| m.data()[z * plane..(z + 1) * plane].iter().map(|&v| v * 255).collect::<Vec<u8>>();
    for z in 0..d {
        let err: Vec<f32> = r.error.data()[z * plane..(z + 1) * plane].iter().map(|&v| v as f32).collect();
        let panels = [
            pgm::to_gray(&img[z * plane..(z + 1) * plane], lo, hi),
            mask_gray(&rec.mask, z),
            mask_gray(&r.initial, z),
            pgm::to_gray(&err, -1.0, 1.0),
            mask_gray(&r.corrected, z),
        ];
        let (pix, width) = pgm::hstack(&panels, w, h);
        pgm::write_pgm(dir.join(format!("{}_z{z:03}.pgm", rec.id)), width, h, &pix)?;
    }
    Ok(())
}

/// Metric reports for `M_I` and `M_corr` of the held-out records.
pub fn eval_stage(cfg: &RunConfig, out: &Layout, records: Option<usize>) -> Result<(EvalReport, EvalReport)> {
    let recs = load_preprocessed(out, records)?;
    let (_, hold) = split_holdout(&recs, cfg.data.holdout)?;
    let load_mask = |id: &str, kind: &'static str| -> Result<SegMask> {
        let path = require(out.refine_dir().join(format!("{id}_{kind}.nvol")), "refined masks (run `refine` first)")?;
        Ok(SegMask::from_volume(&load_nvol(path)?)?)
    };
    let initial = hold.iter().map(|r| load_mask(&r.id, "initial")).collect::<Result<Vec<_>>>()?;
    let corrected = hold.iter().map(|r| load_mask(&r.id, "corrected")).collect::<Result<Vec<_>>>()?;
    let refs: Vec<(&str, &SegMask)> = hold.iter().map(|r| (r.id.as_str(), &r.mask)).collect();
    let before = evaluate_dataset(&paired(hold, &initial), &refs)?;
    let after = evaluate_dataset(&paired(hold, &corrected), &refs)?;
    fs::create_dir_all(out.eval_dir())?;
    write_report_csv(out.eval_dir().join(&cfg.eval.initial_report), &before)?;
    write_report_csv(out.eval_dir().join(&cfg.eval.corrected_report), &after)?;
    Ok((before, after))
}

fn paired<'a>(recs: &'a [DatasetRecord], masks: &'a [SegMask]) -> Vec<(&'a str, &'a SegMask)> {
    recs.iter().zip(masks).map(|(r, m)| (r.id.as_str(), m)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> RunConfig {
        let mut cfg = RunConfig::from_toml(
            r#"
seed = 3
[data]
records = 4
holdout = 1
[data.phantom]
dims = [8, 16, 16]
spacing_mm = [2.0, 2.0, 2.0]
[preprocess]
drop_top = 1
drop_bottom = 1
target_dims = [4, 8, 8]
[unet.network]
in_channels = 4
out_channels = 2
base_channels = 2
levels = 2
[unet.train]
steps = 2
[initial]
source = "eroded-truth"
erode_iterations = 1
[diffusion]
timesteps = 5
beta_start = 0.01
beta_end = 0.2
steps = 2
[diffusion.denoiser]
in_channels = 5
out_channels = 1
base_channels = 2
levels = 2
use_time_embedding = true
time_embed_dim = 4
"#,
        )
        .unwrap();
        cfg.refine.dump_slices = true;
        cfg
    }

    #[test]
    fn stages_chain_and_missing_artifacts_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let out = Layout::new(dir.path());
        let cfg = tiny_config();
        let err = preprocess(&cfg, &out, None).unwrap_err();
        assert_eq!(err.exit_code(), exit_code::MISSING_ARTIFACT);
        synth(&cfg, &out, None).unwrap();
        preprocess(&cfg, &out, None).unwrap();
        let recs = load_preprocessed(&out, None).unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[0].image.dims(), [4, 8, 8]);
        assert_eq!(refine_stage(&cfg, &out, None).unwrap_err().exit_code(), exit_code::MISSING_ARTIFACT);
        train_unet_stage(&cfg, &out, None).unwrap();
        train_diff_stage(&cfg, &out, None).unwrap();
        let refined = refine_stage(&cfg, &out, None).unwrap();
        assert_eq!(refined.len(), 1);
        assert!(out.refine_dir().join("slices").join(format!("{}_z000.pgm", refined[0].id)).exists());
        let (before, after) = eval_stage(&cfg, &out, None).unwrap();
        assert_eq!(before.rows.len(), 1);
        assert_eq!(after.rows.len(), 1);
        assert!(out.eval_dir().join("corrected.csv").exists());
    }

    #[test]
    fn holdout_must_leave_training_records() {
        let dir = tempfile::tempdir().unwrap();
        let out = Layout::new(dir.path());
        let mut cfg = tiny_config();
        synth(&cfg, &out, Some(2)).unwrap();
        preprocess(&cfg, &out, None).unwrap();
        cfg.data.holdout = 2;
        assert_eq!(train_unet_stage(&cfg, &out, None).unwrap_err().exit_code(), exit_code::USAGE);
    }
}
