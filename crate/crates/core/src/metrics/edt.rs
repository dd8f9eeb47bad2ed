use super::MetricsError;
use crate::volume::SegMask;

/// Result of a distance transform.
#[derive(Clone, Debug, PartialEq)]
pub enum DistanceField {
    /// Per-voxel Euclidean distance in mm to the nearest foreground voxel centre.
    Finite(Vec<f64>),
    /// The mask has no foreground, so every distance is infinite.
    Infinite,
}

/// One-dimensional lower envelope of parabolas `s²(p - q)² + f(q)` over the finite
/// entries of `f` (Felzenszwalb & Huttenlocher), written back into `f`.
fn envelope_1d(f: &mut [f64], s: f64, v: &mut Vec<usize>, z: &mut Vec<f64>, out: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    let s2 = s * s;
    let key = |q: usize, f: &[f64]| f[q] + s2 * (q * q) as f64;
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        loop {
            let Some(&r) = v.last() else {
                v.push(q);
                z.push(f64::NEG_INFINITY);
                break;
            };
            let cross = (key(q, f) - key(r, f)) / (2.0 * s2 * (q - r) as f64);
            if cross <= *z.last().expect("parallel to v") {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(cross);
                break;
            }
        }
    }
    if v.is_empty() {
        return;
    }
    out.clear();
    let mut k = 0;
    for p in 0..n {
        while k + 1 < v.len() && z[k + 1] < p as f64 {
            k += 1;
        }
        // the envelope picks a minimizer; scan its neighbours so rounding in the
        // breakpoints can never select a worse candidate
        let mut best = f64::INFINITY;
        for &q in &v[k.saturating_sub(1)..(k + 2).min(v.len())] {
            let d = s * (p as f64 - q as f64);
            best = best.min(f[q] + d * d);
        }
        out.push(best);
    }
    f.copy_from_slice(out);
}

/// Squared distances (mm²), exact up to the evaluation order `(z² + y²) + x²`.
pub(crate) fn squared_edt(mask: &SegMask) -> Option<Vec<f64>> {
    if mask.is_empty() {
        return None;
    }
    let [d, h, w] = mask.dims();
    let sp = mask.spacing();
    let mut g: Vec<f64> = mask.data().iter().map(|&m| if m == 1 { 0.0 } else { f64::INFINITY }).collect();
    let (mut v, mut z, mut out) = (Vec::new(), Vec::new(), Vec::new());
    let mut line = Vec::new();
    // axis order z, y, x
    let passes: [(usize, usize, [usize; 2], [usize; 2]); 3] = [
        (d, h * w, [h, w], [w, 1]),
        (h, w, [d, w], [h * w, 1]),
        (w, 1, [d, h], [h * w, w]),
    ];
    for (axis, (len, stride, outer, outer_stride)) in passes.into_iter().enumerate() {
        for a in 0..outer[0] {
            for b in 0..outer[1] {
                let base = a * outer_stride[0] + b * outer_stride[1];
                line.clear();
                line.extend((0..len).map(|i| g[base + i * stride]));
                envelope_1d(&mut line, sp[axis], &mut v, &mut z, &mut out);
                for (i, &val) in line.iter().enumerate() {
                    g[base + i * stride] = val;
                }
            }
        }
    }
    Some(g)
}

/// Exact Euclidean distance transform honouring anisotropic spacing.
pub fn edt(mask: &SegMask) -> DistanceField {
    match squared_edt(mask) {
        Some(sq) => DistanceField::Finite(sq.into_iter().map(f64::sqrt).collect()),
        None => DistanceField::Infinite,
    }
}

/// `O(n²)` reference: explicit minimum over all foreground voxels.
pub fn edt_bruteforce(mask: &SegMask) -> DistanceField {
    let [d, h, w] = mask.dims();
    let sp = mask.spacing();
    let fg: Vec<[usize; 3]> = coords(mask).collect();
    if fg.is_empty() {
        return DistanceField::Infinite;
    }
    let mut out = Vec::with_capacity(d * h * w);
    for zz in 0..d {
        for yy in 0..h {
            for xx in 0..w {
                let best = fg
                    .iter()
                    .map(|q| squared_mm([zz, yy, xx], *q, sp))
                    .fold(f64::INFINITY, f64::min);
                out.push(best.sqrt());
            }
        }
    }
    DistanceField::Finite(out)
}

pub(crate) fn squared_mm(p: [usize; 3], q: [usize; 3], sp: [f64; 3]) -> f64 {
    let term = |i: usize| {
        let d = sp[i] * (p[i] as f64 - q[i] as f64);
        d * d
    };
    (term(0) + term(1)) + term(2)
}

pub(crate) fn coords(mask: &SegMask) -> impl Iterator<Item = [usize; 3]> + '_ {
    let [_, h, w] = mask.dims();
    mask.data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == 1)
        .map(move |(i, _)| [i / (h * w), (i / w) % h, i % w])
}

pub(crate) fn check_grid(a: &SegMask, b: &SegMask) -> Result<(), MetricsError> {
    if a.same_grid(b) {
        Ok(())
    } else {
        Err(MetricsError::Grid(format!(
            "{:?}@{:?} vs {:?}@{:?}",
            a.dims(),
            a.spacing(),
            b.dims(),
            b.spacing()
        )))
    }
}
