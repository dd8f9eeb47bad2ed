use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DiffusionError, Schedule};
use crate::nn::gradcheck::{grad_check, GradCheckReport, DEFAULT_TOLERANCE};
use crate::nn::{bce, mse, sigmoid, sigmoid_backward, soft_dice_loss, Loss, Scalar, Tensor, BCE_EPS};

/// Training objective for the noise predictor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// Plain `‖ε̂ - ε‖²` (standard DDPM objective).
    EpsMse,
    /// BCE + λ·Dice between the implied `x0` estimate mapped to `[0, 1]` and the true `x0` mapped the same way.
    #[default]
    PaperBceDiceX0,
    /// BCE + λ·Dice between `sigmoid(ε̂)` and `sigmoid(ε)`.
    PaperLiteralSquash,
}

impl std::str::FromStr for LossMode {
    type Err = DiffusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eps-mse" => Ok(Self::EpsMse),
            "paper-bce-dice-x0" => Ok(Self::PaperBceDiceX0),
            "paper-literal-squash" => Ok(Self::PaperLiteralSquash),
            other => Err(DiffusionError::Config(format!("unknown loss mode `{other}`"))),
        }
    }
}

/// Everything one sample contributes to the loss. `eps_hat` is the network output.
pub struct LossInputs<'a, T = f32> {
    pub eps: &'a Tensor<T>,
    pub eps_hat: &'a Tensor<T>,
    pub x_t: &'a Tensor<T>,
    pub x0: &'a Tensor<T>,
    pub alpha_bar: f64,
}

/// Loss value and its gradient with respect to `eps_hat`.
pub fn concatdiff_loss<T: Scalar>(
    mode: LossMode,
    dice_weight: f64,
    smooth: f64,
    inp: &LossInputs<T>,
) -> Result<Loss<T>, DiffusionError> {
    match mode {
        LossMode::EpsMse => Ok(mse(inp.eps_hat, inp.eps)?),
        LossMode::PaperBceDiceX0 => {
            let ab = inp.alpha_bar;
            let (b, inv) = (T::from_f64((1.0 - ab).sqrt()), T::from_f64(1.0 / ab.sqrt()));
            let (zero, one, half) = (T::zero(), T::one(), T::from_f64(0.5));
            // p = clamp((x0_hat + 1) / 2), dp/dε̂ = -b·inv/2 inside the clamp range
            let slope = -half * b * inv;
            let raw: Vec<T> = inp
                .x_t
                .data()
                .iter()
                .zip(inp.eps_hat.data())
                .map(|(&x, &e)| ((x - b * e) * inv + one) * half)
                .collect();
            let p = Tensor::from_vec(inp.eps_hat.shape(), raw.iter().map(|&v| v.max(zero).min(one)).collect())?;
            let target = inp.x0.map(|v| (v + one) * half);
            let (value, g_p) = bce_plus_dice(&p, &target, dice_weight, smooth)?;
            let grad = raw
                .iter()
                .zip(g_p.data())
                .map(|(&r, &g)| if r >= zero && r <= one { g * slope } else { zero })
                .collect();
            Ok(Loss { value, grad: Tensor::from_vec(inp.eps_hat.shape(), grad)? })
        }
        LossMode::PaperLiteralSquash => {
            let p = sigmoid(inp.eps_hat);
            let target = sigmoid(inp.eps);
            let (value, g_p) = bce_plus_dice(&p, &target, dice_weight, smooth)?;
            Ok(Loss { value, grad: sigmoid_backward(&p, &g_p) })
        }
    }
}

fn bce_plus_dice<T: Scalar>(p: &Tensor<T>, target: &Tensor<T>, weight: f64, smooth: f64) -> Result<(T, Tensor<T>), DiffusionError> {
    let l_bce = bce(p, target)?;
    let l_dice = soft_dice_loss(p, target, smooth)?;
    let w = T::from_f64(weight);
    let mut grad = l_bce.grad;
    for (g, &d) in grad.data_mut().iter_mut().zip(l_dice.grad.data()) {
        *g = *g + w * d;
    }
    Ok((l_bce.value + w * l_dice.value, grad))
}

/// Minimum of the BCE term, reached at a perfect prediction: the mean binary
/// entropy of the target after the probability clamp.
pub fn bce_entropy_floor(target: &[f64]) -> f64 {
    let lo = BCE_EPS;
    let h = |t: f64| {
        let p = t.clamp(lo, 1.0 - lo);
        -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
    };
    target.iter().map(|&t| h(t)).sum::<f64>() / target.len() as f64
}

/// Finite-difference checks of every loss mode in 64-bit at a few timesteps.
/// In the x0 mode the network output is drawn so that the implied
/// probabilities stay inside the clamp range.
pub fn loss_grad_suite(seed: u64) -> Vec<GradCheckReport> {
    let sched = Schedule::linear(200, 5e-4, 0.1).expect("valid schedule");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [1, 1, 3, 4, 4];
    let n: usize = shape.iter().product();
    let mut out = Vec::new();
    for mode in [LossMode::EpsMse, LossMode::PaperBceDiceX0, LossMode::PaperLiteralSquash] {
        for t in [1, 60, 200] {
            let ab = sched.alpha_bar(t);
            let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
            let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1i32..=1) as f64).collect();
            let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let x_t: Vec<f64> = x0.iter().zip(&eps).map(|(x, e)| a * x + b * e).collect();
            let guess: Vec<f64> = match mode {
                LossMode::PaperBceDiceX0 => x_t.iter().map(|&x| (x - (2.0 * rng.gen_range(0.1..0.9) - 1.0) * a) / b).collect(),
                _ => eps.iter().map(|&e| e + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect(),
            };
            let tensor = |v: Vec<f64>| Tensor::from_vec(&shape, v).expect("shape matches");
            let (eps, x_t, x0) = (tensor(eps), tensor(x_t), tensor(x0));
            let value = |e: &[f64]| {
                let eps_hat = tensor(e.to_vec());
                let inp = LossInputs { eps: &eps, eps_hat: &eps_hat, x_t: &x_t, x0: &x0, alpha_bar: ab };
                concatdiff_loss(mode, 0.7, 1.0, &inp).expect("same shapes")
            };
            let analytic = value(&guess).grad;
            out.push(grad_check(
                format!("concatdiff {mode:?} t={t}"),
                |e| value(e).value,
                &guess,
                analytic.data(),
                None,
                DEFAULT_TOLERANCE,
            ));
        }
    }
    out
}
