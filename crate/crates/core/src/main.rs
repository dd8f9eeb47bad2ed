use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use segrefine::config::RunConfig;
use segrefine::pipeline::{self, exit_code, Layout, PipelineError};

#[derive(Parser)]
#[command(name = "segrefine", version, about = "Error-guided diffusion refinement of 3D segmentation masks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic phantom records to <out>/data.
    Synth(Common),
    /// Trim, clip and resize records into <out>/preprocessed.
    Preprocess(Common),
    /// Train the segmentation U-Net on the training split.
    TrainUnet(Common),
    /// Train the error-map denoiser on the training split.
    TrainDiff(Common),
    /// Sample error maps for held-out records and correct their initial masks.
    Refine(Common),
    /// Score initial and corrected masks against ground truth.
    Eval(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Use only the first N records of the dataset.
    #[arg(long)]
    records: Option<usize>,
    /// Output directory shared by all stages.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let (Command::Synth(c)
    | Command::Preprocess(c)
    | Command::TrainUnet(c)
    | Command::TrainDiff(c)
    | Command::Refine(c)
    | Command::Eval(c)) = &cli.command;
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let out = Layout::new(&c.out);
    std::fs::create_dir_all(&out.root)?;
    match &cli.command {
        Command::Synth(_) => {
            let manifest = pipeline::synth(&cfg, &out, c.records)?;
            println!("wrote {}", manifest.display());
        }
        Command::Preprocess(_) => {
            let manifest = pipeline::preprocess(&cfg, &out, c.records)?;
            println!("wrote {}", manifest.display());
        }
        Command::TrainUnet(_) => {
            let report = pipeline::train_unet_stage(&cfg, &out, c.records)?;
            println!("final loss {:.6}, checkpoint {}", report.final_loss().unwrap_or(f64::NAN), out.unet_checkpoint().display());
        }
        Command::TrainDiff(_) => {
            let report = pipeline::train_diff_stage(&cfg, &out, c.records)?;
            println!("final loss {:.6}, checkpoint {}", report.final_loss().unwrap_or(f64::NAN), out.diffusion_checkpoint().display());
        }
        Command::Refine(_) => {
            for r in pipeline::refine_stage(&cfg, &out, c.records)? {
                let (plus, minus) = r.error.counts();
                println!("{}: error map -1 {minus} / +1 {plus}, mask {} -> {} voxels", r.id, r.initial.count(), r.corrected.count());
            }
        }
        Command::Eval(_) => {
            let (before, after) = pipeline::eval_stage(&cfg, &out, c.records)?;
            let hd = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.3} mm"));
            println!("initial   dice {:.4}  hd95 {}", before.mean_dice, hd(before.mean_hd95_mm));
            println!("corrected dice {:.4}  hd95 {}", after.mean_dice, hd(after.mean_hd95_mm));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit_code::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
