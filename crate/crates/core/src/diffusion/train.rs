use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{concatdiff_loss, q_sample, DiffusionConfig, DiffusionError, LossInputs};
use crate::errormap::{compute_error_map, encode_error};
use crate::nn::{AdamConfig, AdamState, Tensor};
use crate::unet::UNet3D;
use crate::volume::{SegMask, Volume};

/// One training record: image context, its initial mask and the ground truth.
#[derive(Clone, Copy, Debug)]
pub struct DiffusionSample<'a> {
    pub image: &'a Volume,
    pub initial: &'a SegMask,
    pub truth: &'a SegMask,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffusionLogRow {
    pub step: usize,
    pub loss: f64,
    pub mean_t: f64,
}

#[derive(Clone, Debug, Default)]
pub struct DiffusionReport {
    pub rows: Vec<DiffusionLogRow>,
}

impl DiffusionReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }
}

/// Trains a denoiser on encoded error maps `x0 = E(M_I, M_GT)`, drawing
/// `t ~ U{1..T}` and `ε ~ N(0, I)` per sample and step.
pub fn train_diffusion(
    samples: &[DiffusionSample],
    cfg: &DiffusionConfig,
    seed: u64,
) -> Result<(UNet3D<f32>, DiffusionReport), DiffusionError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(DiffusionError::EmptyDataset);
    }
    let cond_channels = samples[0].image.channels();
    if cfg.denoiser.in_channels != cond_channels + 1 {
        return Err(DiffusionError::Config(format!(
            "denoiser takes {} channels but images have {cond_channels} (+1 error channel)",
            cfg.denoiser.in_channels
        )));
    }
    let sched = cfg.schedule()?;
    let x0s = samples
        .iter()
        .map(|s| Ok(encode_error(&compute_error_map(s.initial, s.truth)?)))
        .collect::<Result<Vec<Vec<f32>>, DiffusionError>>()?;
    let dims = samples[0].image.dims();
    if samples.iter().any(|s| s.image.dims() != dims || s.image.channels() != cond_channels || s.initial.dims() != dims) {
        return Err(DiffusionError::Shape("all training samples must share one grid".into()));
    }

    let mut net = UNet3D::<f32>::new(cfg.denoiser.clone(), seed)?;
    let mut adam = AdamState::new(
        net.params(),
        AdamConfig { weight_decay: cfg.weight_decay, ..AdamConfig::with_lr(cfg.learning_rate) },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0002);
    let mut order: Vec<usize> = Vec::new();
    let mut report = DiffusionReport::default();
    let plane = dims.iter().product::<usize>();
    let one = [1, 1, dims[0], dims[1], dims[2]];

    for step in 1..=cfg.steps {
        let n = cfg.batch_size.min(samples.len());
        let mut picked = Vec::with_capacity(n);
        while picked.len() < n {
            if order.is_empty() {
                order = (0..samples.len()).collect();
                order.shuffle(&mut rng);
            }
            picked.push(order.pop().expect("refilled"));
        }

        let mut input = Vec::with_capacity(n * (cond_channels + 1) * plane);
        let mut ts = Vec::with_capacity(n);
        let mut per_sample = Vec::with_capacity(n);
        for &i in &picked {
            let t = rng.gen_range(1..=sched.len());
            let eps: Vec<f32> = (0..plane).map(|_| rng.sample(StandardNormal)).collect();
            let x_t = q_sample(&x0s[i], t, &eps, &sched)?;
            input.extend_from_slice(samples[i].image.data());
            input.extend_from_slice(&x_t);
            ts.push(t);
            per_sample.push((i, t, eps, x_t));
        }
        let x_ct = Tensor::from_vec(&[n, cond_channels + 1, dims[0], dims[1], dims[2]], input)?;
        let (eps_hat, cache) = net.forward(&x_ct, Some(&ts))?;

        let mut grad = Vec::with_capacity(n * plane);
        let mut total = 0.0f64;
        for (b, (i, t, eps, x_t)) in per_sample.into_iter().enumerate() {
            let pred = Tensor::from_vec(&one, eps_hat.data()[b * plane..(b + 1) * plane].to_vec())?;
            let inputs = LossInputs {
                eps: &Tensor::from_vec(&one, eps)?,
                eps_hat: &pred,
                x_t: &Tensor::from_vec(&one, x_t)?,
                x0: &Tensor::from_vec(&one, x0s[i].clone())?,
                alpha_bar: sched.alpha_bar(t),
            };
            let l = concatdiff_loss(cfg.loss_mode, cfg.dice_weight, cfg.dice_smooth, &inputs)?;
            total += l.value as f64;
            let scale = 1.0 / n as f32;
            grad.extend(l.grad.data().iter().map(|g| g * scale));
        }
        let loss = total / n as f64;
        if !loss.is_finite() {
            return Err(DiffusionError::NonFinite(format!("training loss at step {step}")));
        }
        net.params_mut().zero_grad();
        net.backward(&cache, &Tensor::from_vec(eps_hat.shape(), grad)?)?;
        adam.step(net.params_mut())?;

        if step % cfg.log_every == 0 || step == cfg.steps {
            let mean_t = ts.iter().sum::<usize>() as f64 / n as f64;
            report.rows.push(DiffusionLogRow { step, loss, mean_t });
        }
    }
    Ok((net, report))
}
