//! Every pipeline stage on a reduced copy of the desk configuration, with
//! eroded ground truth standing in for U-Net predictions. The denoiser gets
//! 200 training steps, far too few to improve the masks; the full desk
//! configuration needs about 5000.
//!
//! cargo run --release --example refine_pipeline [OUT_DIR]

use segrefine::config::{InitialMaskSource, RunConfig};
use segrefine::pipeline::{self, Layout};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let mut cfg = RunConfig::load(root)?;
    cfg.data.records = 12;
    cfg.data.holdout = 2;
    cfg.initial.source = InitialMaskSource::ErodedTruth;
    cfg.initial.erode_iterations = 1;
    cfg.diffusion.steps = 200;

    let tmp = tempfile::tempdir()?;
    let out = Layout::new(std::env::args().nth(1).map_or_else(|| tmp.path().to_path_buf(), Into::into));
    pipeline::synth(&cfg, &out, None)?;
    pipeline::preprocess(&cfg, &out, None)?;
    let report = pipeline::train_diff_stage(&cfg, &out, None)?;
    println!("denoiser trained, final loss {:.4}", report.final_loss().unwrap_or(f64::NAN));
    for r in pipeline::refine_stage(&cfg, &out, None)? {
        println!("{}: {} -> {} voxels", r.id, r.initial.count(), r.corrected.count());
    }
    let (before, after) = pipeline::eval_stage(&cfg, &out, None)?;
    println!("dice {:.4} -> {:.4}", before.mean_dice, after.mean_dice);
    println!("artifacts in {}", out.root.display());
    Ok(())
}
