//! Dice and HD95 between a ball and a shifted, shrunken copy.
//!
//! cargo run --release --example metrics

use segrefine::metrics::{dice_score, hd95};
use segrefine::volume::SegMask;

fn ball(dims: [usize; 3], spacing: [f64; 3], center: [f64; 3], radius: f64) -> SegMask {
    let [d, h, w] = dims;
    let mut data = vec![0u8; d * h * w];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let p = [z as f64 * spacing[0], y as f64 * spacing[1], x as f64 * spacing[2]];
                let r2: f64 = (0..3).map(|a| (p[a] - center[a]).powi(2)).sum();
                data[(z * h + y) * w + x] = u8::from(r2 <= radius * radius);
            }
        }
    }
    SegMask::new(dims, spacing, data).expect("valid grid")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dims = [24, 32, 32];
    let spacing = [1.5, 1.0, 1.0];
    let truth = ball(dims, spacing, [18.0, 16.0, 16.0], 9.0);
    for (shift, radius) in [(0.0, 9.0), (0.0, 7.0), (3.0, 9.0), (6.0, 6.0)] {
        let pred = ball(dims, spacing, [18.0, 16.0 + shift, 16.0], radius);
        let hd = hd95(&pred, &truth)?.map_or("undefined".into(), |v| format!("{v:.2} mm"));
        println!("shift {shift:>3} mm radius {radius:>3} mm: dice {:.4}  hd95 {hd}", dice_score(&pred, &truth)?);
    }
    Ok(())
}
