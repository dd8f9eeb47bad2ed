use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{UNet3D, UNet3DConfig, UNetError};
use crate::nn::{bce, dice_loss, softmax_channel, softmax_channel_backward, AdamConfig, AdamState, Tensor};
use crate::volume::{DatasetRecord, SegMask, Volume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub dice_smooth: f64,
    /// Record a log row every this many steps (the last step is always logged).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 7e-4, weight_decay: 0.0, steps: 300, batch_size: 2, dice_smooth: 1.0, log_every: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub loss: f64,
    pub bce: f64,
    pub dice_loss: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub rows: Vec<TrainLogRow>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }
}

/// Stacks image volumes of one grid into an `[N, C, D, H, W]` batch.
pub fn image_batch(images: &[&Volume]) -> Result<Tensor<f32>, UNetError> {
    let first = images.first().ok_or(UNetError::EmptyDataset)?;
    let (c, dims) = (first.channels(), first.dims());
    let mut data = Vec::with_capacity(images.len() * first.data().len());
    for v in images {
        if v.channels() != c || v.dims() != dims {
            return Err(UNetError::Input(format!(
                "batch mixes grids {c}x{dims:?} and {}x{:?}",
                v.channels(),
                v.dims()
            )));
        }
        data.extend_from_slice(v.data());
    }
    Ok(Tensor::from_vec(&[images.len(), c, dims[0], dims[1], dims[2]], data)?)
}

fn mask_batch(masks: &[&SegMask]) -> Result<Tensor<f32>, UNetError> {
    let d = masks[0].dims();
    let data = masks.iter().flat_map(|m| m.data().iter().map(|&v| v as f32)).collect();
    Ok(Tensor::from_vec(&[masks.len(), 1, d[0], d[1], d[2]], data)?)
}

/// Trains a segmentation U-Net with BCE + Dice on the softmax tumour probability.
pub fn train_unet(
    records: &[DatasetRecord],
    net_cfg: UNet3DConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(UNet3D<f32>, TrainReport), UNetError> {
    if records.is_empty() {
        return Err(UNetError::EmptyDataset);
    }
    if net_cfg.out_channels != 2 || net_cfg.use_time_embedding {
        return Err(UNetError::Config("segmentation net needs 2 outputs and no time embedding".into()));
    }
    if cfg.batch_size == 0 || cfg.log_every == 0 {
        return Err(UNetError::Config("batch_size and log_every must be positive".into()));
    }
    let mut net = UNet3D::<f32>::new(net_cfg, seed)?;
    let mut adam = AdamState::new(
        net.params(),
        AdamConfig { weight_decay: cfg.weight_decay, ..AdamConfig::with_lr(cfg.learning_rate) },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001);
    let mut order: Vec<usize> = Vec::new();
    let mut report = TrainReport::default();

    for step in 1..=cfg.steps {
        let mut picked = Vec::with_capacity(cfg.batch_size);
        while picked.len() < cfg.batch_size.min(records.len()) {
            if order.is_empty() {
                order = (0..records.len()).collect();
                order.shuffle(&mut rng);
            }
            picked.push(order.pop().expect("refilled"));
        }
        let images: Vec<&Volume> = picked.iter().map(|&i| &records[i].image).collect();
        let masks: Vec<&SegMask> = picked.iter().map(|&i| &records[i].mask).collect();
        let x = image_batch(&images)?;
        let target = mask_batch(&masks)?;

        let (logits, cache) = net.forward(&x, None)?;
        let probs = softmax_channel(&logits)?;
        let tumour = probs.slice_channels(1, 2)?;
        let l_bce = bce(&tumour, &target)?;
        let l_dice = dice_loss(&tumour, &target, cfg.dice_smooth)?;
        let loss = l_bce.value as f64 + l_dice.value as f64;
        if !loss.is_finite() {
            return Err(UNetError::NonFiniteLoss { step, detail: format!("bce {} dice {}", l_bce.value, l_dice.value) });
        }

        let mut g_tumour = l_bce.grad;
        g_tumour.add_assign(&l_dice.grad)?;
        let mut g_probs = Tensor::zeros(probs.shape());
        let [n, _, d, h, w] = probs.dims5()?;
        let plane = d * h * w;
        for b in 0..n {
            g_probs.data_mut()[(2 * b + 1) * plane..(2 * b + 2) * plane]
                .copy_from_slice(&g_tumour.data()[b * plane..(b + 1) * plane]);
        }
        let g_logits = softmax_channel_backward(&probs, &g_probs)?;
        net.params_mut().zero_grad();
        net.backward(&cache, &g_logits)?;
        adam.step(net.params_mut())?;

        if step % cfg.log_every == 0 || step == cfg.steps {
            report.rows.push(TrainLogRow { step, loss, bce: l_bce.value as f64, dice_loss: l_dice.value as f64 });
        }
    }
    Ok((net, report))
}

/// Binary mask from a segmentation net: tumour where its logit strictly beats background.
pub fn predict_initial_mask(net: &UNet3D<f32>, image: &Volume) -> Result<SegMask, UNetError> {
    let logits = net.predict(&image_batch(&[image])?, None)?;
    let plane = image.voxels();
    let (bg, fg) = logits.data().split_at(plane);
    let data = bg.iter().zip(&fg[..plane]).map(|(b, f)| u8::from(f > b)).collect();
    Ok(SegMask::new(image.dims(), image.spacing(), data)?)
}
