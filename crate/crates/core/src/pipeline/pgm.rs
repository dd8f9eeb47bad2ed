//! Binary greyscale PGM (`P5`) writer for slice dumps.

use std::io::Write;
use std::path::Path;

/// Writes an 8-bit image of `width × height` pixels, row-major.
pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> std::io::Result<()> {
    assert_eq!(pixels.len(), width * height, "pixel count must match the image size");
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    f.flush()
}

/// Maps `values` linearly from `[lo, hi]` to `0..=255`, saturating outside.
pub fn to_gray(values: &[f32], lo: f32, hi: f32) -> Vec<u8> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    values.iter().map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

/// Places equally sized panels side by side with a one-pixel separator.
pub fn hstack(panels: &[Vec<u8>], width: usize, height: usize) -> (Vec<u8>, usize) {
    let total = panels.len() * width + panels.len().saturating_sub(1);
    let mut out = vec![0u8; total * height];
    for (k, p) in panels.iter().enumerate() {
        for y in 0..height {
            let dst = y * total + k * (width + 1);
            out[dst..dst + width].copy_from_slice(&p[y * width..(y + 1) * width]);
        }
    }
    (out, total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_payload() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        write_pgm(&p, 2, 1, &[0, 255]).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"P5\n2 1\n255\n\x00\xff");
    }

    #[test]
    fn gray_mapping_and_stacking() {
        assert_eq!(to_gray(&[-1.0, 0.0, 1.0, 5.0], -1.0, 1.0), vec![0, 128, 255, 255]);
        let (img, w) = hstack(&[vec![1, 2], vec![3, 4]], 1, 2);
        assert_eq!(w, 3);
        assert_eq!(img, vec![1, 0, 3, 2, 0, 4]);
    }
}
