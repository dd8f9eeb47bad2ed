//! Synthesize a deep phantom, run the preprocessing chain and save the result.
//!
//! cargo run --release --example phantom_preprocess

use segrefine::config::PreprocessConfig;
use segrefine::pipeline::preprocess_record;
use segrefine::volume::{load_nvol, save_nvol, synth_phantom, PhantomConfig, ResizeMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let phantom = PhantomConfig { dims: [184, 48, 48], lesion_radius_mm: [6.0, 12.0], seed: 7, ..PhantomConfig::default() };
    let rec = synth_phantom(&phantom, 0)?;
    println!("raw image {}×{:?}, {} lesion voxels", rec.image.channels(), rec.image.dims(), rec.mask.count());

    let pre = PreprocessConfig {
        drop_top: 26,
        drop_bottom: 80,
        clip_low: 1.0,
        clip_high: 99.0,
        target_dims: [78, 40, 40],
        image_resize: ResizeMode::Trilinear,
    };
    let out = preprocess_record(&rec, &pre)?;
    println!("preprocessed image {}×{:?}, {} lesion voxels", out.image.channels(), out.image.dims(), out.mask.count());

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("image.nvol");
    save_nvol(&path, &out.image)?;
    let back = load_nvol(&path)?;
    assert_eq!(back.data(), out.image.data());
    println!("round-tripped {} bytes through {}", std::fs::metadata(&path)?.len(), path.display());
    Ok(())
}
