//! Train a small segmentation U-Net on phantoms and score held-out records.
//!
//! cargo run --release --example segment

use segrefine::metrics::evaluate_dataset;
use segrefine::unet::{predict_initial_mask, train_unet, TrainConfig, UNet3DConfig};
use segrefine::volume::{synth_dataset, PhantomConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let recs = synth_dataset(&PhantomConfig { seed: 11, ..PhantomConfig::default() }, 24)?;
    let (train, hold) = recs.split_at(20);
    let cfg = TrainConfig { steps: 120, log_every: 20, ..TrainConfig::default() };
    let (net, report) = train_unet(train, UNet3DConfig::segmentation(), &cfg, 5)?;
    for row in &report.rows {
        println!("step {:>4}  loss {:.4}  bce {:.4}  dice loss {:.4}", row.step, row.loss, row.bce, row.dice_loss);
    }
    let preds = hold.iter().map(|r| predict_initial_mask(&net, &r.image)).collect::<Result<Vec<_>, _>>()?;
    let p: Vec<_> = hold.iter().zip(&preds).map(|(r, m)| (r.id.as_str(), m)).collect();
    let g: Vec<_> = hold.iter().map(|r| (r.id.as_str(), &r.mask)).collect();
    print!("{}", evaluate_dataset(&p, &g)?.to_csv()?);
    Ok(())
}
