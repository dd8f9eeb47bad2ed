use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{UNet3DConfig, UNetError};
use crate::nn::gradcheck::{grad_check, random_tensor, sample_indices, GradCheckReport, DEFAULT_TOLERANCE};
use crate::nn::{
    add_channel_bias, channel_bias_backward, checkpoint, concat_channels, concat_channels_backward, conv3d,
    conv3d_backward, conv_transpose3d, conv_transpose3d_backward, instance_norm, instance_norm_backward, linear,
    linear_backward, maxpool3d, maxpool3d_backward, relu, relu_backward, NnError, ParamId, ParamSet, PoolIndices,
    Scalar, Tensor,
};

#[derive(Clone, Copy, Debug)]
struct Affine {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct Block {
    conv1: Affine,
    conv2: Affine,
    time: Option<Affine>,
}

#[derive(Clone, Debug)]
struct Layout {
    enc: Vec<Block>,
    /// `up[i]` upsamples from level `i + 1` to level `i`.
    up: Vec<Affine>,
    /// `dec[i]` is the decoder block at level `i`.
    dec: Vec<Block>,
    head: Affine,
    time_mlp: Option<[Affine; 2]>,
}

/// U-Net parameters together with the topology that indexes them.
#[derive(Clone, Debug)]
pub struct UNet3D<T> {
    cfg: UNet3DConfig,
    params: ParamSet<T>,
    layout: Layout,
}

struct Builder<'a, T> {
    params: ParamSet<T>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn kaiming(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64(normal.sample(self.rng))).collect();
        Tensor::from_vec(shape, data).expect("length matches")
    }

    fn add(&mut self, name: &str, w_shape: &[usize], fan_in: usize, bias: usize) -> Result<Affine, NnError> {
        let w = self.kaiming(w_shape, fan_in);
        let w = self.params.add(format!("{name}.w"), w)?;
        let b = self.params.add(format!("{name}.b"), Tensor::zeros(&[bias]))?;
        Ok(Affine { w, b })
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Result<Affine, NnError> {
        self.add(name, &[cout, cin, k, k, k], cin * k * k * k, cout)
    }

    fn block(&mut self, name: &str, cin: usize, cout: usize, cfg: &UNet3DConfig) -> Result<Block, NnError> {
        let conv1 = self.conv(&format!("{name}.conv1"), cin, cout, 3)?;
        let conv2 = self.conv(&format!("{name}.conv2"), cout, cout, 3)?;
        let time = if cfg.use_time_embedding {
            let e = cfg.time_embed_dim;
            Some(self.add(&format!("{name}.time"), &[cout, e], e, cout)?)
        } else {
            None
        };
        Ok(Block { conv1, conv2, time })
    }
}

/// Sinusoidal timestep features, `[N, dim]`: sines in the first half, cosines in the second.
pub fn sinusoidal_embedding<T: Scalar>(timesteps: &[usize], dim: usize) -> Tensor<T> {
    let half = dim / 2;
    let mut data = Vec::with_capacity(timesteps.len() * dim);
    for &t in timesteps {
        let row_start = data.len();
        data.resize(row_start + dim, T::zero());
        for i in 0..half {
            let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
            let arg = t as f64 * freq;
            data[row_start + i] = T::from_f64(arg.sin());
            data[row_start + half + i] = T::from_f64(arg.cos());
        }
    }
    Tensor::from_vec(&[timesteps.len(), dim], data).expect("length matches")
}

struct BlockCache<T> {
    input: Tensor<T>,
    norm1: Option<Vec<T>>,
    pre1: Tensor<T>,
    act1: Tensor<T>,
    norm2: Option<Vec<T>>,
    pre2: Tensor<T>,
    act2: Tensor<T>,
}

struct TimeCache<T> {
    emb: Tensor<T>,
    hidden: Tensor<T>,
    out: Tensor<T>,
}

/// Everything the backward pass needs from a forward pass.
pub struct ForwardCache<T> {
    dims: [usize; 3],
    padded: [usize; 3],
    enc: Vec<BlockCache<T>>,
    pools: Vec<PoolIndices>,
    dec: Vec<BlockCache<T>>,
    time: Option<TimeCache<T>>,
}

fn pad_spatial<T: Scalar>(x: &Tensor<T>, to: [usize; 3]) -> Result<Tensor<T>, NnError> {
    let [n, c, d, h, w] = x.dims5()?;
    if [d, h, w] == to {
        return Ok(x.clone());
    }
    let mut out = Tensor::zeros(&[n, c, to[0], to[1], to[2]]);
    for p in 0..n * c {
        for z in 0..d {
            for y in 0..h {
                let src = ((p * d + z) * h + y) * w;
                let dst = ((p * to[0] + z) * to[1] + y) * to[2];
                out.data_mut()[dst..dst + w].copy_from_slice(&x.data()[src..src + w]);
            }
        }
    }
    Ok(out)
}

fn crop_spatial<T: Scalar>(x: &Tensor<T>, to: [usize; 3]) -> Result<Tensor<T>, NnError> {
    let [n, c, d, h, w] = x.dims5()?;
    if [d, h, w] == to {
        return Ok(x.clone());
    }
    let mut out = Tensor::zeros(&[n, c, to[0], to[1], to[2]]);
    for p in 0..n * c {
        for z in 0..to[0] {
            for y in 0..to[1] {
                let src = ((p * d + z) * h + y) * w;
                let dst = ((p * to[0] + z) * to[1] + y) * to[2];
                out.data_mut()[dst..dst + to[2]].copy_from_slice(&x.data()[src..src + to[2]]);
            }
        }
    }
    Ok(out)
}

impl<T: Scalar> UNet3D<T> {
    /// Builds the topology with Kaiming-normal weights and zero biases.
    pub fn new(cfg: UNet3DConfig, seed: u64) -> Result<Self, UNetError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder { params: ParamSet::new(), rng: &mut rng };
        let levels = cfg.levels;
        let mut enc = Vec::with_capacity(levels);
        for i in 0..levels {
            let cin = if i == 0 { cfg.in_channels } else { cfg.width(i - 1) };
            enc.push(b.block(&format!("enc{i}"), cin, cfg.width(i), &cfg)?);
        }
        let mut up = vec![None; levels.saturating_sub(1)];
        let mut dec = vec![None; levels.saturating_sub(1)];
        for i in (0..levels.saturating_sub(1)).rev() {
            let (wide, narrow) = (cfg.width(i + 1), cfg.width(i));
            up[i] = Some(b.add(&format!("up{i}"), &[wide, narrow, 2, 2, 2], wide, narrow)?);
            dec[i] = Some(b.block(&format!("dec{i}"), 2 * narrow, narrow, &cfg)?);
        }
        let head = b.conv("head", cfg.width(0), cfg.out_channels, 1)?;
        let time_mlp = if cfg.use_time_embedding {
            let e = cfg.time_embed_dim;
            Some([b.add("time.fc1", &[e, e], e, e)?, b.add("time.fc2", &[e, e], e, e)?])
        } else {
            None
        };
        let layout = Layout {
            enc,
            up: up.into_iter().map(|u| u.expect("filled")).collect(),
            dec: dec.into_iter().map(|d| d.expect("filled")).collect(),
            head,
            time_mlp,
        };
        Ok(Self { cfg, params: b.params, layout })
    }

    /// Wraps existing parameters after checking names and shapes against `cfg`.
    pub fn from_params(cfg: UNet3DConfig, params: ParamSet<T>) -> Result<Self, UNetError> {
        let mut net = Self::new(cfg, 0)?;
        if net.params.len() != params.len() {
            return Err(UNetError::Config(format!(
                "expected {} parameter tensors, found {}",
                net.params.len(),
                params.len()
            )));
        }
        for (want, have) in net.params.iter().zip(params.iter()) {
            if want.name != have.name || want.value.shape() != have.value.shape() {
                return Err(UNetError::Config(format!(
                    "parameter `{}` {:?} does not match expected `{}` {:?}",
                    have.name,
                    have.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        net.params = params;
        net.params.zero_grad();
        Ok(net)
    }

    pub fn config(&self) -> &UNet3DConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> UNet3D<U> {
        UNet3D { cfg: self.cfg.clone(), params: self.params.cast(), layout: self.layout.clone() }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), UNetError> {
        checkpoint::save(path, &self.params, &self.cfg.to_toml())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, UNetError> {
        let (params, meta) = checkpoint::load::<T>(path)?;
        Self::from_params(UNet3DConfig::from_toml(&meta)?, params)
    }

    fn check_input(&self, input: &Tensor<T>, timesteps: Option<&[usize]>) -> Result<[usize; 5], UNetError> {
        let dims = input.dims5().map_err(|e| UNetError::Input(e.to_string()))?;
        if dims[1] != self.cfg.in_channels {
            return Err(UNetError::Input(format!(
                "input has {} channels, network expects {}",
                dims[1], self.cfg.in_channels
            )));
        }
        match (self.cfg.use_time_embedding, timesteps) {
            (true, Some(t)) if t.len() == dims[0] => Ok(dims),
            (true, Some(t)) => Err(UNetError::Input(format!("{} timesteps for batch of {}", t.len(), dims[0]))),
            (true, None) => Err(UNetError::Input("timesteps required by time-conditioned network".into())),
            (false, Some(_)) => Err(UNetError::Input("network has no time embedding".into())),
            (false, None) => Ok(dims),
        }
    }

    fn block_forward(&self, ids: &Block, input: Tensor<T>, temb: Option<&Tensor<T>>) -> Result<BlockCache<T>, NnError> {
        let p = &self.params;
        let mut pre1 = conv3d(&input, p.value(ids.conv1.w), Some(p.value(ids.conv1.b)), 1, 1)?;
        let norm1 = if self.cfg.instance_norm {
            let (y, inv) = instance_norm(&pre1)?;
            pre1 = y;
            Some(inv)
        } else {
            None
        };
        let mut biased = pre1.clone();
        if let (Some(t), Some(temb)) = (ids.time, temb) {
            let shift = linear(temb, p.value(t.w), p.value(t.b))?;
            add_channel_bias(&mut biased, &shift)?;
        }
        let act1 = relu(&biased);
        drop(biased);
        let mut pre2 = conv3d(&act1, p.value(ids.conv2.w), Some(p.value(ids.conv2.b)), 1, 1)?;
        let norm2 = if self.cfg.instance_norm {
            let (y, inv) = instance_norm(&pre2)?;
            pre2 = y;
            Some(inv)
        } else {
            None
        };
        let act2 = relu(&pre2);
        Ok(BlockCache { input, norm1, pre1, act1, norm2, pre2, act2 })
    }

    fn block_backward(
        &mut self,
        ids: &Block,
        cache: &BlockCache<T>,
        grad_out: &Tensor<T>,
        temb: Option<(&Tensor<T>, &mut Tensor<T>)>,
    ) -> Result<Tensor<T>, NnError> {
        let mut g = relu_backward(&cache.act2, grad_out);
        if let Some(inv) = &cache.norm2 {
            g = instance_norm_backward(&cache.pre2, inv, &g)?;
        }
        let c2 = conv3d_backward(&cache.act1, self.params.value(ids.conv2.w), &g, 1, 1)?;
        self.params.accumulate(ids.conv2.w, &c2.weight)?;
        self.params.accumulate(ids.conv2.b, &c2.bias)?;
        let mut g = relu_backward(&cache.act1, &c2.input);
        if let (Some(t), Some((temb, g_temb))) = (ids.time, temb) {
            let g_shift = channel_bias_backward(&g)?;
            let lg = linear_backward(temb, self.params.value(t.w), &g_shift)?;
            self.params.accumulate(t.w, &lg.weight)?;
            self.params.accumulate(t.b, &lg.bias)?;
            g_temb.add_assign(&lg.input)?;
        }
        if let Some(inv) = &cache.norm1 {
            g = instance_norm_backward(&cache.pre1, inv, &g)?;
        }
        let c1 = conv3d_backward(&cache.input, self.params.value(ids.conv1.w), &g, 1, 1)?;
        self.params.accumulate(ids.conv1.w, &c1.weight)?;
        self.params.accumulate(ids.conv1.b, &c1.bias)?;
        Ok(c1.input)
    }

    /// Logits `[N, out, D, H, W]` plus the cache for [`UNet3D::backward`].
    pub fn forward(&self, input: &Tensor<T>, timesteps: Option<&[usize]>) -> Result<(Tensor<T>, ForwardCache<T>), UNetError> {
        let [_, _, d, h, w] = self.check_input(input, timesteps)?;
        let m = self.cfg.spatial_multiple();
        let dims = [d, h, w];
        let padded = dims.map(|v| v.div_ceil(m) * m);

        let time = match (&self.layout.time_mlp, timesteps) {
            (Some([fc1, fc2]), Some(ts)) => {
                let p = &self.params;
                let emb = sinusoidal_embedding::<T>(ts, self.cfg.time_embed_dim);
                let hidden = relu(&linear(&emb, p.value(fc1.w), p.value(fc1.b))?);
                let out = relu(&linear(&hidden, p.value(fc2.w), p.value(fc2.b))?);
                Some(TimeCache { emb, hidden, out })
            }
            _ => None,
        };
        let temb = time.as_ref().map(|t| &t.out);

        let levels = self.cfg.levels;
        let mut enc: Vec<BlockCache<T>> = Vec::with_capacity(levels);
        let mut pools = Vec::with_capacity(levels.saturating_sub(1));
        let mut x = pad_spatial(input, padded)?;
        for i in 0..levels {
            let cache = self.block_forward(&self.layout.enc[i], x, temb)?;
            x = if i + 1 < levels {
                let (pooled, idx) = maxpool3d(&cache.act2, 2, 2)?;
                pools.push(idx);
                pooled
            } else {
                Tensor::zeros(&[0])
            };
            enc.push(cache);
        }

        let mut dec: Vec<Option<BlockCache<T>>> = (0..levels.saturating_sub(1)).map(|_| None).collect();
        for i in (0..levels.saturating_sub(1)).rev() {
            let below = if i + 2 == levels { &enc[i + 1].act2 } else { &dec[i + 1].as_ref().expect("built").act2 };
            let up = self.layout.up[i];
            let u = conv_transpose3d(below, self.params.value(up.w), Some(self.params.value(up.b)), 2)?;
            let cat = concat_channels(&enc[i].act2, &u)?;
            dec[i] = Some(self.block_forward(&self.layout.dec[i], cat, temb)?);
        }
        let dec: Vec<BlockCache<T>> = dec.into_iter().map(|d| d.expect("built")).collect();

        let top = if levels > 1 { &dec[0].act2 } else { &enc[0].act2 };
        let head = self.layout.head;
        let logits = conv3d(top, self.params.value(head.w), Some(self.params.value(head.b)), 1, 0)?;
        let logits = crop_spatial(&logits, dims)?;
        Ok((logits, ForwardCache { dims, padded, enc, pools, dec, time }))
    }

    /// Forward pass without keeping intermediate activations for training.
    pub fn predict(&self, input: &Tensor<T>, timesteps: Option<&[usize]>) -> Result<Tensor<T>, UNetError> {
        Ok(self.forward(input, timesteps)?.0)
    }

    /// Accumulates parameter gradients for `grad_out` (shaped like the logits)
    /// and returns the gradient with respect to the input.
    pub fn backward(&mut self, cache: &ForwardCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, UNetError> {
        let layout = self.layout.clone();
        let levels = self.cfg.levels;
        let g = pad_spatial(grad_out, cache.padded)?;
        let top = if levels > 1 { &cache.dec[0].act2 } else { &cache.enc[0].act2 };
        let hg = conv3d_backward(top, self.params.value(layout.head.w), &g, 1, 0)?;
        self.params.accumulate(layout.head.w, &hg.weight)?;
        self.params.accumulate(layout.head.b, &hg.bias)?;

        let mut g_temb = cache.time.as_ref().map(|t| Tensor::zeros(t.out.shape()));
        let temb = cache.time.as_ref().map(|t| &t.out);
        let mut skip_grads: Vec<Option<Tensor<T>>> = (0..levels).map(|_| None).collect();

        let mut g = hg.input;
        for i in 0..levels.saturating_sub(1) {
            let g_cat = self.block_backward(&layout.dec[i], &cache.dec[i], &g, temb.zip(g_temb.as_mut()))?;
            let (g_skip, g_up) = concat_channels_backward(&g_cat, self.cfg.width(i))?;
            skip_grads[i] = Some(g_skip);
            let below = if i + 2 == levels { &cache.enc[i + 1].act2 } else { &cache.dec[i + 1].act2 };
            let ug = conv_transpose3d_backward(below, self.params.value(layout.up[i].w), &g_up, 2)?;
            self.params.accumulate(layout.up[i].w, &ug.weight)?;
            self.params.accumulate(layout.up[i].b, &ug.bias)?;
            g = ug.input;
        }

        // `g` now holds the gradient at the bottom encoder output
        for i in (0..levels).rev() {
            let g_out = if i + 1 == levels {
                g
            } else {
                let mut routed = maxpool3d_backward(&cache.pools[i], &g)?;
                routed.add_assign(skip_grads[i].as_ref().expect("set by decoder"))?;
                routed
            };
            g = self.block_backward(&layout.enc[i], &cache.enc[i], &g_out, temb.zip(g_temb.as_mut()))?;
        }

        if let (Some([fc1, fc2]), Some(tc), Some(g_t)) = (layout.time_mlp, cache.time.as_ref(), g_temb) {
            let g2 = relu_backward(&tc.out, &g_t);
            let l2 = linear_backward(&tc.hidden, self.params.value(fc2.w), &g2)?;
            self.params.accumulate(fc2.w, &l2.weight)?;
            self.params.accumulate(fc2.b, &l2.bias)?;
            let g1 = relu_backward(&tc.hidden, &l2.input);
            let l1 = linear_backward(&tc.emb, self.params.value(fc1.w), &g1)?;
            self.params.accumulate(fc1.w, &l1.weight)?;
            self.params.accumulate(fc1.b, &l1.bias)?;
        }
        Ok(crop_spatial(&g, cache.dims)?)
    }
}

/// Finite-difference check of a small f64 network: the input gradient and a
/// sample of coordinates from every parameter. With instance norm the bias of
/// a normalized conv has an exactly zero true gradient; those are checked for
/// `|g| < 1e-9` instead (reported error 0 or infinity).
pub fn grad_check_network(cfg: UNet3DConfig, seed: u64) -> Result<Vec<GradCheckReport>, UNetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = UNet3D::<f64>::new(cfg.clone(), seed)?;
    // Zero-initialized biases put every pre-activation fed by all-zero inputs
    // (padding, dead hidden units) exactly on the ReLU kink; move off it.
    for p in 0..net.params().len() {
        let id = ParamId(p);
        if net.params().iter().nth(p).expect("index in range").name.ends_with(".b") {
            let shape = net.params().value(id).shape().to_vec();
            let b = random_tensor(&shape, &mut rng).map(|v| 0.1 * v);
            net.params_mut().set_value(id, b).expect("same shape");
        }
    }
    let m = cfg.spatial_multiple();
    let x = random_tensor(&[2, cfg.in_channels, 2 * m, 2 * m, 2 * m + 2], &mut rng);
    let ts = [3usize, 40];
    let t = cfg.use_time_embedding.then_some(&ts[..]);
    let (y, cache) = net.forward(&x, t)?;
    let r = random_tensor(y.shape(), &mut rng);
    let gx = net.backward(&cache, &r)?;
    let idx = sample_indices(x.numel(), 40, &mut rng);
    let mut reports = vec![grad_check(
        "input",
        |d| net.predict(&Tensor::from_vec(x.shape(), d.to_vec()).expect("same shape"), t).expect("valid input").dot(&r),
        x.data(),
        gx.data(),
        Some(&idx),
        DEFAULT_TOLERANCE,
    )];
    for p in 0..net.params().len() {
        let id = ParamId(p);
        let base = net.params().value(id).clone();
        let analytic = net.params().grad(id).clone();
        let name = net.params().iter().nth(p).expect("index in range").name.clone();
        if cfg.instance_norm && name.contains(".conv") && name.ends_with(".b") {
            let worst = analytic.data().iter().fold(0.0f64, |m, g| m.max(g.abs()));
            reports.push(GradCheckReport {
                name: format!("{name} (normalized)"),
                max_rel_error: if worst < 1e-9 { 0.0 } else { f64::INFINITY },
                worst_index: 0,
                checked: analytic.numel(),
                tolerance: DEFAULT_TOLERANCE,
            });
            continue;
        }
        let idx = sample_indices(base.numel(), 6, &mut rng);
        reports.push(grad_check(
            name,
            |d| {
                let mut n = net.clone();
                n.params_mut().set_value(id, Tensor::from_vec(base.shape(), d.to_vec()).expect("same shape")).expect("known id");
                n.predict(&x, t).expect("valid input").dot(&r)
            },
            base.data(),
            analytic.data(),
            Some(&idx),
            DEFAULT_TOLERANCE,
        ));
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::random_tensor;

    /// Parameter count written out from the topology description.
    fn expected_params(cfg: &UNet3DConfig) -> usize {
        let conv = |ci: usize, co: usize, k: usize| co * ci * k * k * k + co;
        let widths: Vec<usize> = (0..cfg.levels).map(|i| cfg.base_channels * 2usize.pow(i as u32)).collect();
        let mut total = 0;
        let mut block_widths = Vec::new();
        for i in 0..cfg.levels {
            let cin = if i == 0 { cfg.in_channels } else { widths[i - 1] };
            total += conv(cin, widths[i], 3) + conv(widths[i], widths[i], 3);
            block_widths.push(widths[i]);
        }
        for i in 0..cfg.levels - 1 {
            total += widths[i + 1] * widths[i] * 8 + widths[i];
            total += conv(2 * widths[i], widths[i], 3) + conv(widths[i], widths[i], 3);
            block_widths.push(widths[i]);
        }
        total += conv(widths[0], cfg.out_channels, 1);
        if cfg.use_time_embedding {
            let e = cfg.time_embed_dim;
            total += 2 * (e * e + e);
            total += block_widths.iter().map(|w| w * e + w).sum::<usize>();
        }
        total
    }

    #[test]
    fn parameter_count_matches_topology() {
        let cfg = UNet3DConfig { levels: 4, base_channels: 8, in_channels: 4, out_channels: 2, ..UNet3DConfig::segmentation() };
        let net = UNet3D::<f32>::new(cfg.clone(), 0).unwrap();
        assert_eq!(net.params().num_scalars(), expected_params(&cfg));
        let den = UNet3DConfig::denoiser();
        let net = UNet3D::<f32>::new(den.clone(), 0).unwrap();
        assert_eq!(net.params().num_scalars(), expected_params(&den));
    }

    #[test]
    fn same_seed_same_checkpoint() {
        let cfg = UNet3DConfig::segmentation();
        let a = UNet3D::<f32>::new(cfg.clone(), 9).unwrap();
        let b = UNet3D::<f32>::new(cfg, 9).unwrap();
        assert_eq!(checkpoint::to_bytes(a.params(), ""), checkpoint::to_bytes(b.params(), ""));
    }

    #[test]
    fn single_level_preserves_dims() {
        let cfg = UNet3DConfig { levels: 1, ..UNet3DConfig::segmentation() };
        let net = UNet3D::<f32>::new(cfg, 1).unwrap();
        assert_eq!(net.params().len(), 6);
        let y = net.predict(&Tensor::zeros(&[1, 4, 3, 5, 7]), None).unwrap();
        assert_eq!(y.shape(), [1, 2, 3, 5, 7]);
    }

    #[test]
    fn output_shape_with_padding() {
        let net = UNet3D::<f32>::new(UNet3DConfig::segmentation(), 1).unwrap();
        let y = net.predict(&Tensor::zeros(&[2, 4, 5, 6, 7]), None).unwrap();
        assert_eq!(y.shape(), [2, 2, 5, 6, 7]);
    }

    #[test]
    fn perturbing_one_voxel_changes_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = UNet3D::<f64>::new(UNet3DConfig::segmentation(), 3).unwrap();
        let x = random_tensor(&[1, 4, 4, 8, 8], &mut rng);
        let mut x2 = x.clone();
        x2.data_mut()[100] += 0.5;
        assert_ne!(net.predict(&x, None).unwrap(), net.predict(&x2, None).unwrap());
    }

    #[test]
    fn input_validation() {
        let net = UNet3D::<f32>::new(UNet3DConfig::segmentation(), 1).unwrap();
        assert!(matches!(net.predict(&Tensor::zeros(&[1, 3, 4, 4, 4]), None), Err(UNetError::Input(_))));
        assert!(matches!(net.predict(&Tensor::zeros(&[1, 4, 4, 4, 4]), Some(&[3])), Err(UNetError::Input(_))));
        let den = UNet3D::<f32>::new(UNet3DConfig::denoiser(), 1).unwrap();
        assert!(matches!(den.predict(&Tensor::zeros(&[1, 5, 4, 4, 4]), None), Err(UNetError::Input(_))));
        assert!(UNet3D::<f32>::new(UNet3DConfig { levels: 0, ..UNet3DConfig::segmentation() }, 0).is_err());
    }

    #[test]
    fn checkpoint_round_trip_gives_identical_forward() {
        let dir = tempfile::tempdir().unwrap();
        let net = UNet3D::<f32>::new(UNet3DConfig::denoiser(), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_tensor(&[1, 5, 4, 8, 8], &mut rng).cast::<f32>();
        let before = net.predict(&x, Some(&[17])).unwrap();
        net.save(dir.path().join("n.ckpt")).unwrap();
        let back = UNet3D::<f32>::load(dir.path().join("n.ckpt")).unwrap();
        let after = back.predict(&x, Some(&[17])).unwrap();
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&before), bits(&after));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = UNet3DConfig { base_channels: 2, levels: 2, ..UNet3DConfig::segmentation() };
        for rep in grad_check_network(cfg, 21).unwrap() {
            assert!(rep.passed(), "{rep}");
        }
    }

    #[test]
    fn gradients_match_with_time_embedding_and_norm() {
        let cfg = UNet3DConfig { base_channels: 2, levels: 2, time_embed_dim: 4, instance_norm: true, ..UNet3DConfig::denoiser() };
        let reports = grad_check_network(cfg, 22).unwrap();
        assert!(reports.iter().any(|r| r.name.starts_with("time.")));
        for rep in reports {
            assert!(rep.passed(), "{rep}");
        }
    }

    #[test]
    fn time_embedding_is_live() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = UNet3D::<f32>::new(UNet3DConfig::denoiser(), 6).unwrap();
        let x = random_tensor(&[1, 5, 4, 4, 4], &mut rng).cast::<f32>();
        assert_ne!(net.predict(&x, Some(&[1])).unwrap(), net.predict(&x, Some(&[150])).unwrap());
    }
}
