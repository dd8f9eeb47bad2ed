//! Overlap and boundary metrics: Dice, exact distance transforms and HD95.

mod edt;
mod report;

pub use edt::{edt, edt_bruteforce, DistanceField};
pub use report::{evaluate_dataset, read_report_csv, write_report_csv, EvalReport, EvalResult};

use thiserror::Error;

use crate::stats::percentile_sorted;
use crate::volume::morphology::erode;
use crate::volume::SegMask;
use edt::{check_grid, coords, squared_edt, squared_mm};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mask grids differ: {0}")]
    Grid(String),
    #[error("record ids differ at position {index}: `{prediction}` vs `{reference}`")]
    IdMismatch { index: usize, prediction: String, reference: String },
    #[error("{0} predictions for {1} references")]
    CountMismatch(usize, usize),
    #[error("malformed report: {0}")]
    Report(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const HD_PERCENTILE: f64 = 95.0;

/// `2|A∩B| / (|A| + |B|)`; 1 when both masks are empty.
pub fn dice_score(a: &SegMask, b: &SegMask) -> Result<f64, MetricsError> {
    check_grid(a, b)?;
    let (inter, na, nb) = overlap_counts(a, b);
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

fn overlap_counts(a: &SegMask, b: &SegMask) -> (usize, usize, usize) {
    let mut inter = 0;
    let mut na = 0;
    let mut nb = 0;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x & y) as usize;
        na += x as usize;
        nb += y as usize;
    }
    (inter, na, nb)
}

/// Foreground voxels with at least one 6-neighbour in the background
/// (voxels on the volume border count as surface).
pub fn surface(mask: &SegMask) -> SegMask {
    let inner = erode(mask, 1);
    let data = mask.data().iter().zip(inner.data()).map(|(&m, &i)| m & (1 - i)).collect();
    SegMask::new(mask.dims(), mask.spacing(), data).expect("subset of a valid mask")
}

/// 95th percentile over the union of both directed surface distance sets,
/// `None` when either surface is empty.
pub fn hd95(a: &SegMask, b: &SegMask) -> Result<Option<f64>, MetricsError> {
    check_grid(a, b)?;
    let (sa, sb) = (surface(a), surface(b));
    let (Some(da), Some(db)) = (squared_edt(&sa), squared_edt(&sb)) else {
        return Ok(None);
    };
    let mut dists: Vec<f64> = sa
        .data()
        .iter()
        .zip(&db)
        .chain(sb.data().iter().zip(&da))
        .filter(|(&m, _)| m == 1)
        .map(|(_, &d2)| d2.sqrt())
        .collect();
    dists.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&dists, HD_PERCENTILE))
}

/// All-pairs reference for [`hd95`].
pub fn hd95_bruteforce(a: &SegMask, b: &SegMask) -> Result<Option<f64>, MetricsError> {
    check_grid(a, b)?;
    let (sa, sb) = (surface(a), surface(b));
    let pa: Vec<[usize; 3]> = coords(&sa).collect();
    let pb: Vec<[usize; 3]> = coords(&sb).collect();
    if pa.is_empty() || pb.is_empty() {
        return Ok(None);
    }
    let sp = a.spacing();
    let directed = |from: &[[usize; 3]], to: &[[usize; 3]]| -> Vec<f64> {
        from.iter()
            .map(|p| to.iter().map(|q| squared_mm(*p, *q, sp)).fold(f64::INFINITY, f64::min).sqrt())
            .collect()
    };
    let mut dists = directed(&pa, &pb);
    dists.extend(directed(&pb, &pa));
    dists.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&dists, HD_PERCENTILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mask(rng: &mut impl Rng, dims: [usize; 3], spacing: [f64; 3], p: f64) -> SegMask {
        let n = dims.iter().product();
        SegMask::new(dims, spacing, (0..n).map(|_| u8::from(rng.gen_bool(p))).collect()).unwrap()
    }

    fn single(dims: [usize; 3], at: [usize; 3], spacing: [f64; 3]) -> SegMask {
        let mut data = vec![0; dims.iter().product()];
        data[(at[0] * dims[1] + at[1]) * dims[2] + at[2]] = 1;
        SegMask::new(dims, spacing, data).unwrap()
    }

    #[test]
    fn dice_counts() {
        // |A| = 4, |B| = 6, |A∩B| = 3
        let a = SegMask::new([1, 1, 8], [1.0; 3], vec![1, 1, 1, 1, 0, 0, 0, 0]).unwrap();
        let b = SegMask::new([1, 1, 8], [1.0; 3], vec![0, 1, 1, 1, 1, 1, 1, 0]).unwrap();
        assert!((dice_score(&a, &b).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(dice_score(&a, &a).unwrap(), 1.0);
        let empty = SegMask::zeros([1, 1, 8], [1.0; 3]).unwrap();
        assert_eq!(dice_score(&empty, &empty).unwrap(), 1.0);
        assert_eq!(dice_score(&a, &empty).unwrap(), 0.0);
    }

    #[test]
    fn grid_mismatch() {
        let a = SegMask::zeros([2, 2, 2], [1.0; 3]).unwrap();
        let b = SegMask::zeros([2, 2, 2], [1.0, 1.0, 2.0]).unwrap();
        assert!(matches!(dice_score(&a, &b), Err(MetricsError::Grid(_))));
        assert!(matches!(hd95(&a, &b), Err(MetricsError::Grid(_))));
    }

    #[test]
    fn edt_single_voxel() {
        let m = single([4, 4, 4], [0, 0, 0], [1.0; 3]);
        let DistanceField::Finite(d) = edt(&m) else { panic!() };
        assert_eq!(d[3], 3.0);
        assert_eq!(d[0], 0.0);
        assert_eq!(edt(&SegMask::zeros([2, 2, 2], [1.0; 3]).unwrap()), DistanceField::Infinite);
        let full = SegMask::new([2, 2, 2], [1.0; 3], vec![1; 8]).unwrap();
        assert_eq!(edt(&full), DistanceField::Finite(vec![0.0; 8]));
    }

    #[test]
    fn edt_matches_bruteforce_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (i, spacing) in [[1.0, 1.0, 1.0], [1.0, 0.5, 2.0], [0.7, 1.3, 0.9]].into_iter().enumerate() {
            for trial in 0..20 {
                let p = [0.02, 0.1, 0.5][trial % 3];
                let m = random_mask(&mut rng, [8, 7, 9], spacing, p);
                assert_eq!(edt(&m), edt_bruteforce(&m), "spacing set {i}, trial {trial}");
            }
        }
    }

    #[test]
    fn hd95_simple_cases() {
        let a = single([1, 1, 8], [0, 0, 1], [1.0; 3]);
        let b = single([1, 1, 8], [0, 0, 4], [1.0; 3]);
        assert_eq!(hd95(&a, &b).unwrap(), Some(3.0));
        assert_eq!(hd95(&a, &a).unwrap(), Some(0.0));
        let empty = SegMask::zeros([1, 1, 8], [1.0; 3]).unwrap();
        assert_eq!(hd95(&a, &empty).unwrap(), None);
        assert_eq!(hd95_bruteforce(&empty, &a).unwrap(), None);
    }

    #[test]
    fn surface_of_solid_cube() {
        let mut data = vec![0u8; 125];
        for z in 1..4 {
            for y in 1..4 {
                for x in 1..4 {
                    data[(z * 5 + y) * 5 + x] = 1;
                }
            }
        }
        let s = surface(&SegMask::new([5, 5, 5], [1.0; 3], data).unwrap());
        assert_eq!(s.count(), 26);
        assert_eq!(s.get(2, 2, 2), 0);
    }

    #[test]
    fn hd95_matches_bruteforce_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..60 {
            let spacing = if trial % 2 == 0 { [1.0, 1.0, 1.0] } else { [1.0, 0.5, 2.0] };
            let a = random_mask(&mut rng, [8, 8, 8], spacing, 0.2);
            let b = random_mask(&mut rng, [8, 8, 8], spacing, 0.1);
            let fast = hd95(&a, &b).unwrap();
            assert_eq!(fast, hd95_bruteforce(&a, &b).unwrap());
            assert_eq!(fast, hd95(&b, &a).unwrap());
            assert!((dice_score(&a, &b).unwrap() - dice_score(&b, &a).unwrap()).abs() == 0.0);
        }
    }
}
