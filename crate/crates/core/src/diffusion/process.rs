use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DiffusionError, Schedule};
use crate::nn::{Scalar, Tensor};
use crate::unet::UNet3D;
use crate::volume::Volume;

fn same_len(a: usize, b: usize, what: &str) -> Result<(), DiffusionError> {
    if a == b {
        Ok(())
    } else {
        Err(DiffusionError::Shape(format!("{what}: {a} vs {b} elements")))
    }
}

/// `x_t = √ᾱ_t x0 + √(1 - ᾱ_t) ε`.
pub fn q_sample<T: Scalar>(x0: &[T], t: usize, eps: &[T], sched: &Schedule) -> Result<Vec<T>, DiffusionError> {
    sched.check(t)?;
    same_len(x0.len(), eps.len(), "q_sample")?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (T::from_f64(ab.sqrt()), T::from_f64((1.0 - ab).sqrt()));
    Ok(x0.iter().zip(eps).map(|(&x, &e)| a * x + b * e).collect())
}

/// Inverse of [`q_sample`] for a given noise estimate.
pub fn x0_from_eps<T: Scalar>(x_t: &[T], t: usize, eps_hat: &[T], sched: &Schedule) -> Result<Vec<T>, DiffusionError> {
    sched.check(t)?;
    same_len(x_t.len(), eps_hat.len(), "x0_from_eps")?;
    let ab = sched.alpha_bar(t);
    let (b, inv) = (T::from_f64((1.0 - ab).sqrt()), T::from_f64(1.0 / ab.sqrt()));
    Ok(x_t.iter().zip(eps_hat).map(|(&x, &e)| (x - b * e) * inv).collect())
}

/// Appends the one-channel field `x` to the conditioning channels of `c`,
/// giving a `[1, C + 1, D, H, W]` tensor.
pub fn make_conditioned_input(c: &Volume, x: &[f32]) -> Result<Tensor<f32>, DiffusionError> {
    same_len(c.voxels(), x.len(), "conditioned input")?;
    let [d, h, w] = c.dims();
    let mut data = Vec::with_capacity(c.data().len() + x.len());
    data.extend_from_slice(c.data());
    data.extend_from_slice(x);
    Ok(Tensor::from_vec(&[1, c.channels() + 1, d, h, w], data)?)
}

/// Anything that can estimate the noise in the last channel of `x_{c,t}`.
pub trait NoisePredictor {
    fn predict_noise(&self, x_ct: &Tensor<f32>, t: usize) -> Result<Tensor<f32>, DiffusionError>;
}

impl NoisePredictor for UNet3D<f32> {
    fn predict_noise(&self, x_ct: &Tensor<f32>, t: usize) -> Result<Tensor<f32>, DiffusionError> {
        let cfg = self.config();
        if !cfg.use_time_embedding || cfg.out_channels != 1 {
            return Err(DiffusionError::Shape("denoiser needs a time embedding and one output channel".into()));
        }
        let n = x_ct.dims5()?[0];
        Ok(self.predict(x_ct, Some(&vec![t; n]))?)
    }
}

/// Returns the exact noise that separates `x_t` from a known `x0`.
pub struct TrueNoiseOracle<'a> {
    pub x0: &'a [f32],
    pub schedule: &'a Schedule,
}

impl NoisePredictor for TrueNoiseOracle<'_> {
    fn predict_noise(&self, x_ct: &Tensor<f32>, t: usize) -> Result<Tensor<f32>, DiffusionError> {
        self.schedule.check(t)?;
        let [n, c, d, h, w] = x_ct.dims5()?;
        let plane = d * h * w;
        if n != 1 || plane != self.x0.len() {
            return Err(DiffusionError::Shape("oracle expects one sample on the x0 grid".into()));
        }
        let x_t = &x_ct.data()[(c - 1) * plane..];
        let ab = self.schedule.alpha_bar(t);
        let (a, inv) = (ab.sqrt() as f32, (1.0 / (1.0 - ab).sqrt()) as f32);
        let eps = x_t.iter().zip(self.x0).map(|(&x, &x0)| (x - a * x0) * inv).collect();
        Ok(Tensor::from_vec(&[1, 1, d, h, w], eps)?)
    }
}

/// Variance of the reverse transitions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReverseNoise {
    /// `σ_t = √β_t`.
    #[default]
    SqrtBeta,
    /// Deterministic mean updates.
    Zero,
}

/// Reverse-step options.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sampler {
    pub noise: ReverseNoise,
    /// Clip the implied `x0 = (x_t - √(1-ᾱ_t) ε̂)/√ᾱ_t` to `[-1, 1]` and step to
    /// the posterior mean of `q(x_{t-1} | x_t, x0)`. Without the clip this is
    /// the same mean as the ε form; with it, errors in ε̂ that the `1/√ᾱ_t`
    /// factor would blow up stay bounded.
    pub clip_denoised: bool,
}

impl From<ReverseNoise> for Sampler {
    fn from(noise: ReverseNoise) -> Self {
        Self { noise, clip_denoised: false }
    }
}

/// One reverse step on the error channel: `(x_t - (β_t/√(1-ᾱ_t)) ε̂) / √α_t + σ_t z`,
/// with the clean conditioning re-attached to form the predictor input.
/// `observe` sees every `x_{c,t}` handed to the predictor.
#[allow(clippy::too_many_arguments)]
pub fn p_sample_step(
    x_t: &[f32],
    c: &Volume,
    t: usize,
    predictor: &dyn NoisePredictor,
    sched: &Schedule,
    sampler: Sampler,
    rng: &mut impl Rng,
    observe: &mut dyn FnMut(usize, &Tensor<f32>),
) -> Result<Vec<f32>, DiffusionError> {
    sched.check(t)?;
    let x_ct = make_conditioned_input(c, x_t)?;
    observe(t, &x_ct);
    let eps = predictor.predict_noise(&x_ct, t)?;
    same_len(eps.numel(), x_t.len(), "predicted noise")?;
    let sigma = match sampler.noise {
        ReverseNoise::SqrtBeta if t > 1 => sched.sigma(t) as f32,
        _ => 0.0,
    };
    let mut out: Vec<f32> = if sampler.clip_denoised {
        let ab = sched.alpha_bar(t);
        let ab_prev = if t > 1 { sched.alpha_bar(t - 1) } else { 1.0 };
        let c0 = (ab_prev.sqrt() * sched.beta(t) / (1.0 - ab)) as f32;
        let ct = (sched.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab)) as f32;
        let x0 = x0_from_eps(x_t, t, eps.data(), sched)?;
        x0.iter().zip(x_t).map(|(&x0, &x)| c0 * x0.clamp(-1.0, 1.0) + ct * x).collect()
    } else {
        let coef = (sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt()) as f32;
        let inv_sqrt_alpha = (1.0 / sched.alpha(t).sqrt()) as f32;
        x_t.iter().zip(eps.data()).map(|(&x, &e)| (x - coef * e) * inv_sqrt_alpha).collect()
    };
    if sigma > 0.0 {
        for v in &mut out {
            let z: f32 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
    }
    Ok(out)
}

/// Runs the reverse chain from pure Gaussian noise down to `t = 1` and returns
/// the continuous error field.
pub fn sample_error_map(
    c: &Volume,
    predictor: &dyn NoisePredictor,
    sched: &Schedule,
    sampler: Sampler,
    rng: &mut impl Rng,
) -> Result<Vec<f32>, DiffusionError> {
    let x_t: Vec<f32> = (0..c.voxels()).map(|_| rng.sample(StandardNormal)).collect();
    run_chain(x_t, c, predictor, sched, sampler, rng, &mut |_, _| {})
}

/// Reverse chain from an explicit starting field `x_T`.
pub fn run_chain(
    mut x_t: Vec<f32>,
    c: &Volume,
    predictor: &dyn NoisePredictor,
    sched: &Schedule,
    sampler: Sampler,
    rng: &mut impl Rng,
    observe: &mut dyn FnMut(usize, &Tensor<f32>),
) -> Result<Vec<f32>, DiffusionError> {
    for t in (1..=sched.len()).rev() {
        x_t = p_sample_step(&x_t, c, t, predictor, sched, sampler, rng, observe)?;
        if x_t.iter().any(|v| !v.is_finite()) {
            return Err(DiffusionError::NonFinite(format!("reverse chain at t = {t}")));
        }
    }
    Ok(x_t)
}
