//! Binary morphology with the 6-connected structuring element.

use super::SegMask;

const NEIGHBOURS: [[isize; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

fn step(mask: &SegMask, grow: bool) -> SegMask {
    let [d, h, w] = mask.dims();
    let src = mask.data();
    let mut out = src.to_vec();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = (z * h + y) * w + x;
                // erosion flips foreground voxels touching background (or the border);
                // dilation flips background voxels touching foreground
                if (src[i] == 1) != grow {
                    let hit = NEIGHBOURS.iter().any(|o| {
                        let (zz, yy, xx) = (z as isize + o[0], y as isize + o[1], x as isize + o[2]);
                        let inside = zz >= 0 && yy >= 0 && xx >= 0 && zz < d as isize && yy < h as isize && xx < w as isize;
                        if !inside {
                            return !grow;
                        }
                        let v = src[((zz as usize) * h + yy as usize) * w + xx as usize];
                        if grow { v == 1 } else { v == 0 }
                    });
                    if hit {
                        out[i] = grow as u8;
                    }
                }
            }
        }
    }
    SegMask::new(mask.dims(), mask.spacing(), out).expect("morphology keeps masks binary")
}

pub fn erode(mask: &SegMask, iterations: usize) -> SegMask {
    (0..iterations).fold(mask.clone(), |m, _| step(&m, false))
}

pub fn dilate(mask: &SegMask, iterations: usize) -> SegMask {
    (0..iterations).fold(mask.clone(), |m, _| step(&m, true))
}
