//! Dataset manifests: one record per line, paths relative to the manifest.
//!
//! A line holds either two paths (`image mask`, the image already a
//! four-channel stack) or five (`t1 t1ce t2 flair labels`). Blank lines and
//! lines starting with `#` are ignored. The record id is the first path's
//! file stem with any `_img`/`_t1` suffix removed.

use std::fs;
use std::path::{Path, PathBuf};

use super::{load_nvol, merge_labels, save_nvol, stack_modalities, DatasetRecord, LabelVolume, SegMask, VolumeError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RecordSource {
    Stacked { image: PathBuf, mask: PathBuf },
    Modalities { modalities: [PathBuf; 4], labels: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub source: RecordSource,
}

fn record_id(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("record");
    ["_img", "_t1"].iter().find_map(|suf| stem.strip_suffix(suf)).unwrap_or(stem).to_string()
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, VolumeError> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<PathBuf> = line.split_whitespace().map(|p| base.join(p)).collect();
        let source = match parts.len() {
            2 => RecordSource::Stacked { image: parts[0].clone(), mask: parts[1].clone() },
            5 => RecordSource::Modalities {
                modalities: [parts[0].clone(), parts[1].clone(), parts[2].clone(), parts[3].clone()],
                labels: parts[4].clone(),
            },
            k => {
                return Err(VolumeError::Manifest {
                    path: path.display().to_string(),
                    line: n + 1,
                    msg: format!("expected 2 or 5 paths, found {k}"),
                })
            }
        };
        out.push(ManifestEntry { id: record_id(&parts[0]), source });
    }
    Ok(out)
}

/// Writes `image mask` lines with paths relative to the manifest directory.
pub fn write_manifest(path: impl AsRef<Path>, rows: &[(String, String)]) -> Result<(), VolumeError> {
    let mut text = String::from("# image mask\n");
    for (img, mask) in rows {
        text.push_str(&format!("{img} {mask}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn load_record(entry: &ManifestEntry) -> Result<DatasetRecord, VolumeError> {
    match &entry.source {
        RecordSource::Stacked { image, mask } => {
            let image = load_nvol(image)?;
            let mask = SegMask::from_volume(&load_nvol(mask)?)?;
            DatasetRecord::new(entry.id.clone(), image, mask)
        }
        RecordSource::Modalities { modalities, labels } => {
            let vols = modalities.iter().map(load_nvol).collect::<Result<Vec<_>, _>>()?;
            let image = stack_modalities([&vols[0], &vols[1], &vols[2], &vols[3]])?;
            let mask = merge_labels(&LabelVolume::from_volume(&load_nvol(labels)?)?);
            DatasetRecord::new(entry.id.clone(), image, mask)
        }
    }
}

/// Saves records as `<id>_img.nvol` / `<id>_seg.nvol` plus `manifest.txt`.
pub fn write_dataset(dir: impl AsRef<Path>, records: &[DatasetRecord]) -> Result<PathBuf, VolumeError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        let (img, seg) = (format!("{}_img.nvol", r.id), format!("{}_seg.nvol", r.id));
        save_nvol(dir.join(&img), &r.image)?;
        save_nvol(dir.join(&seg), &r.mask.to_volume())?;
        rows.push((img, seg));
    }
    let manifest = dir.join("manifest.txt");
    write_manifest(&manifest, &rows)?;
    Ok(manifest)
}
