//! Finite-difference checks of every kernel and of two small networks.
//!
//! cargo run --release --example gradcheck

use segrefine::nn::gradcheck::kernel_suite;
use segrefine::unet::{grad_check_network, UNet3DConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut reports = kernel_suite(1);
    let seg = UNet3DConfig { base_channels: 2, levels: 2, ..UNet3DConfig::segmentation() };
    let den = UNet3DConfig { base_channels: 2, levels: 2, time_embed_dim: 4, ..UNet3DConfig::denoiser() };
    for (tag, cfg) in [("segmenter", seg), ("denoiser", den)] {
        for mut r in grad_check_network(cfg, 2)? {
            r.name = format!("{tag}/{}", r.name);
            reports.push(r);
        }
    }
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    println!("{} checks, {failed} failed", reports.len());
    std::process::exit(i32::from(failed > 0));
}
