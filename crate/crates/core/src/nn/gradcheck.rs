//! Central finite-difference checks for the analytic backward passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Finite-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-6;
/// Relative errors are measured against `max(|analytic|, |numeric|, REL_FLOOR)`.
pub const REL_FLOOR: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance && self.checked > 0
    }

    /// Combines several reports into one keeping the worst error.
    pub fn merge(name: impl Into<String>, parts: &[GradCheckReport]) -> Self {
        let worst = parts.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error));
        Self {
            name: name.into(),
            max_rel_error: worst.map_or(0.0, |w| w.max_rel_error),
            worst_index: worst.map_or(0, |w| w.worst_index),
            checked: parts.iter().map(|p| p.checked).sum(),
            tolerance: parts.iter().map(|p| p.tolerance).fold(f64::INFINITY, f64::min),
        }
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<28} max rel err {:.3e} over {} coords (tol {:.0e}) {}",
            self.name,
            self.max_rel_error,
            self.checked,
            self.tolerance,
            if self.passed() { "ok" } else { "FAILED" }
        )
    }
}

/// Compares `analytic` with central differences of `f` at `x`.
///
/// `indices` restricts the check to a subset of coordinates.
pub fn grad_check(
    name: impl Into<String>,
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    indices: Option<&[usize]>,
    tolerance: f64,
) -> GradCheckReport {
    assert_eq!(x.len(), analytic.len(), "gradient length must match input length");
    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    let mut probe = x.to_vec();
    let mut worst = (0.0f64, 0usize);
    for &i in idx {
        let orig = probe[i];
        probe[i] = orig + FD_STEP;
        let up = f(&probe);
        probe[i] = orig - FD_STEP;
        let down = f(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > worst.0 || rel.is_nan() {
            worst = (if rel.is_nan() { f64::INFINITY } else { rel }, i);
        }
    }
    GradCheckReport { name: name.into(), max_rel_error: worst.0, worst_index: worst.1, checked: idx.len(), tolerance }
}

/// Random subset of `n` coordinates out of `len` (all when `len <= n`).
pub fn sample_indices(len: usize, n: usize, rng: &mut impl Rng) -> Vec<usize> {
    if len <= n {
        return (0..len).collect();
    }
    rand::seq::index::sample(rng, len, n).into_vec()
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("length matches")
}

fn with_data(like: &Tensor<f64>, data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(like.shape(), data.to_vec()).expect("same length")
}

/// Checks `⟨forward(x), r⟩` against `backward(x, r)` for a random projection `r`.
pub fn check_unary(
    name: &str,
    x: &Tensor<f64>,
    forward: impl Fn(&Tensor<f64>) -> Tensor<f64>,
    backward: impl Fn(&Tensor<f64>, &Tensor<f64>) -> Tensor<f64>,
    rng: &mut impl Rng,
) -> GradCheckReport {
    let y = forward(x);
    let r = random_tensor(y.shape(), rng);
    let analytic = backward(x, &r);
    grad_check(name, |d| forward(&with_data(x, d)).dot(&r), x.data(), analytic.data(), None, DEFAULT_TOLERANCE)
}

/// Runs every registered kernel check on small random shapes.
pub fn kernel_suite(seed: u64) -> Vec<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let tol = DEFAULT_TOLERANCE;

    // conv3d: input, weight and bias
    for &(stride, pad, k) in &[(1usize, 1usize, 3usize), (2, 0, 2)] {
        let x = random_tensor(&[2, 2, 4, 4, 4], &mut rng);
        let w = random_tensor(&[3, 2, k, k, k], &mut rng);
        let b = random_tensor(&[3], &mut rng);
        let y = conv3d(&x, &w, Some(&b), stride, pad).unwrap();
        let r = random_tensor(y.shape(), &mut rng);
        let g = conv3d_backward(&x, &w, &r, stride, pad).unwrap();
        let f_x = |d: &[f64]| conv3d(&with_data(&x, d), &w, Some(&b), stride, pad).unwrap().dot(&r);
        let f_w = |d: &[f64]| conv3d(&x, &with_data(&w, d), Some(&b), stride, pad).unwrap().dot(&r);
        let f_b = |d: &[f64]| conv3d(&x, &w, Some(&with_data(&b, d)), stride, pad).unwrap().dot(&r);
        out.push(GradCheckReport::merge(
            format!("conv3d k{k} s{stride} p{pad}"),
            &[
                grad_check("x", f_x, x.data(), g.input.data(), None, tol),
                grad_check("w", f_w, w.data(), g.weight.data(), None, tol),
                grad_check("b", f_b, b.data(), g.bias.data(), None, tol),
            ],
        ));
    }

    // conv_transpose3d
    {
        let x = random_tensor(&[2, 3, 2, 3, 2], &mut rng);
        let w = random_tensor(&[3, 2, 2, 2, 2], &mut rng);
        let b = random_tensor(&[2], &mut rng);
        let y = conv_transpose3d(&x, &w, Some(&b), 2).unwrap();
        let r = random_tensor(y.shape(), &mut rng);
        let g = conv_transpose3d_backward(&x, &w, &r, 2).unwrap();
        let f_x = |d: &[f64]| conv_transpose3d(&with_data(&x, d), &w, Some(&b), 2).unwrap().dot(&r);
        let f_w = |d: &[f64]| conv_transpose3d(&x, &with_data(&w, d), Some(&b), 2).unwrap().dot(&r);
        let f_b = |d: &[f64]| conv_transpose3d(&x, &w, Some(&with_data(&b, d)), 2).unwrap().dot(&r);
        out.push(GradCheckReport::merge(
            "conv_transpose3d k2 s2",
            &[
                grad_check("x", f_x, x.data(), g.input.data(), None, tol),
                grad_check("w", f_w, w.data(), g.weight.data(), None, tol),
                grad_check("b", f_b, b.data(), g.bias.data(), None, tol),
            ],
        ));
    }

    // maxpool3d; distinct values keep the argmax away from ties
    {
        let n = 2 * 2 * 4 * 4 * 2;
        let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            vals.swap(i, j);
        }
        let x = Tensor::from_vec(&[2, 2, 4, 4, 2], vals).unwrap();
        out.push(check_unary(
            "maxpool3d w2 s2",
            &x,
            |x| maxpool3d(x, 2, 2).unwrap().0,
            |x, g| maxpool3d_backward(&maxpool3d(x, 2, 2).unwrap().1, g).unwrap(),
            &mut rng,
        ));
    }

    // relu away from the kink
    {
        let x = random_tensor(&[2, 3, 5], &mut rng).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
        out.push(check_unary("relu", &x, relu, |x, g| relu_backward(&relu(x), g), &mut rng));
    }
    {
        let x = random_tensor(&[2, 3, 5], &mut rng).map(|v| 4.0 * v);
        out.push(check_unary("sigmoid", &x, sigmoid, |x, g| sigmoid_backward(&sigmoid(x), g), &mut rng));
    }
    {
        let x = random_tensor(&[2, 3, 2, 2, 2], &mut rng).map(|v| 3.0 * v);
        out.push(check_unary(
            "softmax_channel",
            &x,
            |x| softmax_channel(x).unwrap(),
            |x, g| softmax_channel_backward(&softmax_channel(x).unwrap(), g).unwrap(),
            &mut rng,
        ));
    }
    {
        let a = random_tensor(&[2, 4, 2, 2, 2], &mut rng);
        let b = random_tensor(&[2, 1, 2, 2, 2], &mut rng);
        let y = concat_channels(&a, &b).unwrap();
        let r = random_tensor(y.shape(), &mut rng);
        let (ga, gb) = concat_channels_backward(&r, 4).unwrap();
        out.push(GradCheckReport::merge(
            "concat_channels",
            &[
                grad_check("a", |d| concat_channels(&with_data(&a, d), &b).unwrap().dot(&r), a.data(), ga.data(), None, tol),
                grad_check("b", |d| concat_channels(&a, &with_data(&b, d)).unwrap().dot(&r), b.data(), gb.data(), None, tol),
            ],
        ));
    }
    {
        let x = random_tensor(&[2, 3, 2, 2, 2], &mut rng);
        let b = random_tensor(&[2, 3], &mut rng);
        let r = random_tensor(x.shape(), &mut rng);
        let shifted = |x: &Tensor<f64>, b: &Tensor<f64>| {
            let mut y = x.clone();
            add_channel_bias(&mut y, b).unwrap();
            y
        };
        let gb = channel_bias_backward(&r).unwrap();
        out.push(GradCheckReport::merge(
            "channel_bias",
            &[
                grad_check("x", |d| shifted(&with_data(&x, d), &b).dot(&r), x.data(), r.data(), None, tol),
                grad_check("b", |d| shifted(&x, &with_data(&b, d)).dot(&r), b.data(), gb.data(), None, tol),
            ],
        ));
    }
    {
        let x = random_tensor(&[3, 4], &mut rng);
        let w = random_tensor(&[5, 4], &mut rng);
        let b = random_tensor(&[5], &mut rng);
        let y = linear(&x, &w, &b).unwrap();
        let r = random_tensor(y.shape(), &mut rng);
        let g = linear_backward(&x, &w, &r).unwrap();
        out.push(GradCheckReport::merge(
            "linear",
            &[
                grad_check("x", |d| linear(&with_data(&x, d), &w, &b).unwrap().dot(&r), x.data(), g.input.data(), None, tol),
                grad_check("w", |d| linear(&x, &with_data(&w, d), &b).unwrap().dot(&r), w.data(), g.weight.data(), None, tol),
                grad_check("b", |d| linear(&x, &w, &with_data(&b, d)).unwrap().dot(&r), b.data(), g.bias.data(), None, tol),
            ],
        ));
    }
    {
        let x = random_tensor(&[2, 2, 2, 3, 2], &mut rng);
        out.push(check_unary(
            "instance_norm",
            &x,
            |x| instance_norm(x).unwrap().0,
            |x, g| {
                let (y, inv) = instance_norm(x).unwrap();
                instance_norm_backward(&y, &inv, g).unwrap()
            },
            &mut rng,
        ));
    }

    // losses, with predictions strictly inside (0, 1)
    let pred = random_tensor(&[2, 1, 2, 3, 2], &mut rng).map(|v| 0.5 + 0.45 * v);
    let soft_t = random_tensor(pred.shape(), &mut rng).map(|v| 0.5 + 0.5 * v);
    let hard_t = soft_t.map(|v| if v > 0.5 { 1.0 } else { 0.0 });
    type LossFn = fn(&Tensor<f64>, &Tensor<f64>) -> Loss<f64>;
    let losses: [(&str, LossFn); 4] = [
        ("bce", |p, t| bce(p, t).unwrap()),
        ("dice_loss", |p, t| dice_loss(p, t, 1.0).unwrap()),
        ("soft_dice_loss", |p, t| soft_dice_loss(p, t, 1.0).unwrap()),
        ("mse", |p, t| mse(p, t).unwrap()),
    ];
    for (name, f) in losses {
        let parts: Vec<_> = [&soft_t, &hard_t]
            .iter()
            .map(|t| {
                let analytic = f(&pred, t).grad;
                grad_check(name, |d| f(&with_data(&pred, d), t).value, pred.data(), analytic.data(), None, tol)
            })
            .collect();
        out.push(GradCheckReport::merge(name, &parts));
    }
    out
}
