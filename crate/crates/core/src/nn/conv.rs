use super::{NnError, Scalar, Tensor};

/// Geometry of a strided 3-d cross-correlation.
///
/// `image` is the side the kernel slides over; `cols` is the strided output
/// grid. A transposed convolution uses the same geometry with the roles of
/// input and output swapped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub image: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: usize,
    pub padding: usize,
    pub out: [usize; 3],
}

impl ConvGeom {
    pub fn new(image: [usize; 3], kernel: [usize; 3], stride: usize, padding: usize) -> Result<Self, NnError> {
        if stride == 0 {
            return Err(NnError::Shape("stride must be positive".into()));
        }
        let mut out = [0; 3];
        for a in 0..3 {
            let span = image[a] + 2 * padding;
            if kernel[a] == 0 || span < kernel[a] {
                return Err(NnError::Shape(format!(
                    "kernel {:?} does not fit image {:?} with padding {padding}",
                    kernel, image
                )));
            }
            out[a] = (span - kernel[a]) / stride + 1;
        }
        Ok(Self { image, kernel, stride, padding, out })
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn image_voxels(&self) -> usize {
        self.image.iter().product()
    }

    pub fn out_voxels(&self) -> usize {
        self.out.iter().product()
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.stride == 1 && self.padding == 0
    }

    /// Range of output indices `o` along one axis for which `o*stride + k - pad` is inside the image.
    #[inline]
    fn valid_range(&self, axis: usize, k: usize) -> (usize, usize) {
        let (s, p, n) = (self.stride as isize, self.padding as isize, self.image[axis] as isize);
        let k = k as isize;
        // o*s + k - p >= 0  and  o*s + k - p < n
        let lo = ((p - k).max(0) + s - 1) / s;
        let hi = if n + p - k <= 0 { 0 } else { (n + p - k - 1) / s + 1 };
        let hi = hi.min(self.out[axis] as isize);
        (lo as usize, hi.max(lo) as usize)
    }
}

/// Unfolds `image` (`channels × image voxels`) into `cols` (`channels·k³ × out voxels`).
fn im2col<T: Scalar>(image: &[T], channels: usize, g: &ConvGeom, cols: &mut [T]) {
    let [id, ih, iw] = g.image;
    let [od, oh, ow] = g.out;
    let [kd, kh, kw] = g.kernel;
    let (s, p) = (g.stride, g.padding);
    let out_vox = od * oh * ow;
    let mut row = 0;
    for c in 0..channels {
        let plane = &image[c * id * ih * iw..(c + 1) * id * ih * iw];
        for kz in 0..kd {
            let (z0, z1) = g.valid_range(0, kz);
            for ky in 0..kh {
                let (y0, y1) = g.valid_range(1, ky);
                for kx in 0..kw {
                    let (x0, x1) = g.valid_range(2, kx);
                    let dst = &mut cols[row * out_vox..(row + 1) * out_vox];
                    dst.fill(T::zero());
                    for oz in z0..z1 {
                        let iz = oz * s + kz - p;
                        for oy in y0..y1 {
                            let iy = oy * s + ky - p;
                            let src_row = &plane[(iz * ih + iy) * iw..(iz * ih + iy + 1) * iw];
                            let dst_row = &mut dst[(oz * oh + oy) * ow..(oz * oh + oy + 1) * ow];
                            if s == 1 {
                                let ix0 = x0 + kx - p;
                                dst_row[x0..x1].copy_from_slice(&src_row[ix0..ix0 + (x1 - x0)]);
                            } else {
                                for ox in x0..x1 {
                                    dst_row[ox] = src_row[ox * s + kx - p];
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds `cols` back onto `image`.
fn col2im<T: Scalar>(cols: &[T], channels: usize, g: &ConvGeom, image: &mut [T]) {
    let [id, ih, iw] = g.image;
    let [od, oh, ow] = g.out;
    let [kd, kh, kw] = g.kernel;
    let (s, p) = (g.stride, g.padding);
    let out_vox = od * oh * ow;
    let mut row = 0;
    for c in 0..channels {
        let plane = &mut image[c * id * ih * iw..(c + 1) * id * ih * iw];
        for kz in 0..kd {
            let (z0, z1) = g.valid_range(0, kz);
            for ky in 0..kh {
                let (y0, y1) = g.valid_range(1, ky);
                for kx in 0..kw {
                    let (x0, x1) = g.valid_range(2, kx);
                    let src = &cols[row * out_vox..(row + 1) * out_vox];
                    for oz in z0..z1 {
                        let iz = oz * s + kz - p;
                        for oy in y0..y1 {
                            let iy = oy * s + ky - p;
                            let dst_row = &mut plane[(iz * ih + iy) * iw..(iz * ih + iy + 1) * iw];
                            let src_row = &src[(oz * oh + oy) * ow..(oz * oh + oy + 1) * ow];
                            if s == 1 {
                                let ix0 = x0 + kx - p;
                                for (d, &v) in dst_row[ix0..ix0 + (x1 - x0)].iter_mut().zip(&src_row[x0..x1]) {
                                    *d = *d + v;
                                }
                            } else {
                                for ox in x0..x1 {
                                    let d = &mut dst_row[ox * s + kx - p];
                                    *d = *d + src_row[ox];
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

fn weight_dims(weight: &Tensor<impl Scalar>) -> Result<[usize; 5], NnError> {
    weight.dims5().map_err(|_| NnError::Shape(format!("weight must be 5-d, got {:?}", weight.shape())))
}

fn check_bias<T: Scalar>(bias: Option<&Tensor<T>>, channels: usize) -> Result<(), NnError> {
    match bias {
        Some(b) if b.shape() != [channels] => {
            Err(NnError::Shape(format!("bias shape {:?}, expected [{channels}]", b.shape())))
        }
        _ => Ok(()),
    }
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], voxels: usize) {
    for (c, &b) in bias.iter().enumerate() {
        out[c * voxels..(c + 1) * voxels].iter_mut().for_each(|v| *v = *v + b);
    }
}

fn bias_grad<T: Scalar>(grad_out: &Tensor<T>, channels: usize) -> Tensor<T> {
    let n = grad_out.shape()[0];
    let voxels = grad_out.numel() / (n * channels).max(1);
    let mut gb = vec![T::zero(); channels];
    for b in 0..n {
        for (c, acc) in gb.iter_mut().enumerate() {
            let start = (b * channels + c) * voxels;
            *acc = *acc + grad_out.data()[start..start + voxels].iter().copied().sum::<T>();
        }
    }
    Tensor::from_vec(&[channels], gb).expect("length matches")
}

/// 3-d cross-correlation. `input` is `[N, Ci, D, H, W]`, `weight` is `[Co, Ci, kd, kh, kw]`.
pub fn conv3d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>, NnError> {
    let [n, ci, d, h, w] = input.dims5()?;
    let [co, wci, kd, kh, kw] = weight_dims(weight)?;
    if wci != ci {
        return Err(NnError::Shape(format!("conv3d: input has {ci} channels, weight expects {wci}")));
    }
    check_bias(bias, co)?;
    let g = ConvGeom::new([d, h, w], [kd, kh, kw], stride, padding)?;
    let (in_vox, out_vox, k) = (g.image_voxels(), g.out_voxels(), ci * g.kernel_volume());
    let mut out = Tensor::zeros(&[n, co, g.out[0], g.out[1], g.out[2]]);
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); k * out_vox] };
    for b in 0..n {
        let x = &input.data()[b * ci * in_vox..(b + 1) * ci * in_vox];
        let cols_ref: &[T] = if g.is_pointwise() {
            x
        } else {
            im2col(x, ci, &g, &mut cols);
            &cols
        };
        let y = &mut out.data_mut()[b * co * out_vox..(b + 1) * co * out_vox];
        T::gemm(co, k, out_vox, T::one(), weight.data(), (k as isize, 1), cols_ref, (out_vox as isize, 1), T::zero(), y, (out_vox as isize, 1));
        if let Some(bias) = bias {
            add_bias(y, bias.data(), out_vox);
        }
    }
    Ok(out)
}

pub fn conv3d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads<T>, NnError> {
    let [n, ci, d, h, w] = input.dims5()?;
    let [co, _, kd, kh, kw] = weight_dims(weight)?;
    let g = ConvGeom::new([d, h, w], [kd, kh, kw], stride, padding)?;
    if grad_out.shape() != [n, co, g.out[0], g.out[1], g.out[2]] {
        return Err(NnError::Shape(format!("conv3d backward: grad shape {:?}", grad_out.shape())));
    }
    let (in_vox, out_vox, k) = (g.image_voxels(), g.out_voxels(), ci * g.kernel_volume());
    let mut gx = Tensor::zeros(input.shape());
    let mut gw = Tensor::zeros(weight.shape());
    let pointwise = g.is_pointwise();
    let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); k * out_vox] };
    let mut dcols = if pointwise { Vec::new() } else { vec![T::zero(); k * out_vox] };
    for b in 0..n {
        let x = &input.data()[b * ci * in_vox..(b + 1) * ci * in_vox];
        let dy = &grad_out.data()[b * co * out_vox..(b + 1) * co * out_vox];
        let cols_ref: &[T] = if pointwise {
            x
        } else {
            im2col(x, ci, &g, &mut cols);
            &cols
        };
        // dW += dY · colsᵀ
        T::gemm(co, out_vox, k, T::one(), dy, (out_vox as isize, 1), cols_ref, (1, out_vox as isize), T::one(), gw.data_mut(), (k as isize, 1));
        // dcols = Wᵀ · dY
        let gx_b = &mut gx.data_mut()[b * ci * in_vox..(b + 1) * ci * in_vox];
        if pointwise {
            T::gemm(k, co, out_vox, T::one(), weight.data(), (1, k as isize), dy, (out_vox as isize, 1), T::zero(), gx_b, (out_vox as isize, 1));
        } else {
            T::gemm(k, co, out_vox, T::one(), weight.data(), (1, k as isize), dy, (out_vox as isize, 1), T::zero(), &mut dcols, (out_vox as isize, 1));
            col2im(&dcols, ci, &g, gx_b);
        }
    }
    Ok(ConvGrads { input: gx, weight: gw, bias: bias_grad(grad_out, co) })
}

fn transpose_geom(input_dims: [usize; 3], kernel: [usize; 3], stride: usize) -> Result<ConvGeom, NnError> {
    let mut image = [0; 3];
    for a in 0..3 {
        if input_dims[a] == 0 {
            return Err(NnError::Shape("conv_transpose3d: empty input".into()));
        }
        image[a] = (input_dims[a] - 1) * stride + kernel[a];
    }
    let g = ConvGeom::new(image, kernel, stride, 0)?;
    debug_assert_eq!(g.out, input_dims);
    Ok(g)
}

/// Transposed 3-d convolution (no padding). `weight` is `[Ci, Co, kd, kh, kw]`;
/// output extent per axis is `(n - 1) * stride + k`.
pub fn conv_transpose3d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>, NnError> {
    let [n, ci, d, h, w] = input.dims5()?;
    let [wci, co, kd, kh, kw] = weight_dims(weight)?;
    if wci != ci {
        return Err(NnError::Shape(format!("conv_transpose3d: input has {ci} channels, weight expects {wci}")));
    }
    check_bias(bias, co)?;
    let g = transpose_geom([d, h, w], [kd, kh, kw], stride)?;
    let (in_vox, out_vox, k) = (g.out_voxels(), g.image_voxels(), co * g.kernel_volume());
    let mut out = Tensor::zeros(&[n, co, g.image[0], g.image[1], g.image[2]]);
    let mut cols = vec![T::zero(); k * in_vox];
    for b in 0..n {
        let x = &input.data()[b * ci * in_vox..(b + 1) * ci * in_vox];
        // cols = Wᵀ · X, with W viewed as Ci × (Co·k³)
        T::gemm(k, ci, in_vox, T::one(), weight.data(), (1, k as isize), x, (in_vox as isize, 1), T::zero(), &mut cols, (in_vox as isize, 1));
        let y = &mut out.data_mut()[b * co * out_vox..(b + 1) * co * out_vox];
        col2im(&cols, co, &g, y);
        if let Some(bias) = bias {
            add_bias(y, bias.data(), out_vox);
        }
    }
    Ok(out)
}

pub fn conv_transpose3d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
) -> Result<ConvGrads<T>, NnError> {
    let [n, ci, d, h, w] = input.dims5()?;
    let [_, co, kd, kh, kw] = weight_dims(weight)?;
    let g = transpose_geom([d, h, w], [kd, kh, kw], stride)?;
    if grad_out.shape() != [n, co, g.image[0], g.image[1], g.image[2]] {
        return Err(NnError::Shape(format!("conv_transpose3d backward: grad shape {:?}", grad_out.shape())));
    }
    let (in_vox, out_vox, k) = (g.out_voxels(), g.image_voxels(), co * g.kernel_volume());
    let mut gx = Tensor::zeros(input.shape());
    let mut gw = Tensor::zeros(weight.shape());
    let mut cols = vec![T::zero(); k * in_vox];
    for b in 0..n {
        let x = &input.data()[b * ci * in_vox..(b + 1) * ci * in_vox];
        let dy = &grad_out.data()[b * co * out_vox..(b + 1) * co * out_vox];
        im2col(dy, co, &g, &mut cols);
        let gx_b = &mut gx.data_mut()[b * ci * in_vox..(b + 1) * ci * in_vox];
        T::gemm(ci, k, in_vox, T::one(), weight.data(), (k as isize, 1), &cols, (in_vox as isize, 1), T::zero(), gx_b, (in_vox as isize, 1));
        T::gemm(ci, in_vox, k, T::one(), x, (in_vox as isize, 1), &cols, (1, in_vox as isize), T::one(), gw.data_mut(), (k as isize, 1));
    }
    Ok(ConvGrads { input: gx, weight: gw, bias: bias_grad(grad_out, co) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct six-loop cross-correlation.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let [n, ci, d, h, wd] = x.dims5().unwrap();
        let [co, _, kd, kh, kw] = w.dims5().unwrap();
        let od = (d + 2 * pad - kd) / stride + 1;
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        let mut out = Tensor::zeros(&[n, co, od, oh, ow]);
        for b in 0..n {
            for o in 0..co {
                for z in 0..od {
                    for y in 0..oh {
                        for xx in 0..ow {
                            let mut acc = 0.0;
                            for c in 0..ci {
                                for a in 0..kd {
                                    for bb in 0..kh {
                                        for cc in 0..kw {
                                            let iz = (z * stride + a) as isize - pad as isize;
                                            let iy = (y * stride + bb) as isize - pad as isize;
                                            let ix = (xx * stride + cc) as isize - pad as isize;
                                            if iz < 0 || iy < 0 || ix < 0 || iz >= d as isize || iy >= h as isize || ix >= wd as isize {
                                                continue;
                                            }
                                            let xi = (((b * ci + c) * d + iz as usize) * h + iy as usize) * wd + ix as usize;
                                            let wi = (((o * ci + c) * kd + a) * kh + bb) * kw + cc;
                                            acc += x.data()[xi] * w.data()[wi];
                                        }
                                    }
                                }
                            }
                            out.data_mut()[(((b * co + o) * od + z) * oh + y) * ow + xx] = acc;
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[1, 1, 3, 4, 5], &mut rng);
        let w = Tensor::full(&[1, 1, 1, 1, 1], 1.0);
        let y = conv3d(&x, &w, None, 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_sums_neighbourhood() {
        let k = 0.75;
        let x = Tensor::full(&[1, 1, 5, 5, 5], k);
        let w = Tensor::full(&[1, 1, 3, 3, 3], 1.0);
        let y = conv3d(&x, &w, None, 1, 1).unwrap();
        for z in 1..4 {
            for yy in 1..4 {
                for xx in 1..4 {
                    assert_eq!(y.data()[(z * 5 + yy) * 5 + xx], 27.0 * k);
                }
            }
        }
        // corner sees 2×2×2 in-bounds voxels
        assert_eq!(y.data()[0], 8.0 * k);
    }

    #[test]
    fn matches_naive_for_strides_and_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(stride, pad, k) in &[(1, 1, 3), (2, 0, 2), (2, 1, 3), (1, 0, 1), (3, 2, 3)] {
            let x = random(&[2, 3, 5, 6, 7], &mut rng);
            let w = random(&[4, 3, k, k, k], &mut rng);
            let y = conv3d(&x, &w, None, stride, pad).unwrap();
            let r = naive_conv(&x, &w, stride, pad);
            assert_eq!(y.shape(), r.shape());
            for (a, b) in y.data().iter().zip(r.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transpose_doubles_extent() {
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4, 4]);
        let w = Tensor::zeros(&[2, 3, 2, 2, 2]);
        let y = conv_transpose3d(&x, &w, None, 2).unwrap();
        assert_eq!(y.shape(), [1, 3, 8, 8, 8]);
    }

    #[test]
    fn transpose_stamps_kernel_for_one_hot_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random(&[1, 2, 2, 2, 2], &mut rng);
        let mut x = Tensor::zeros(&[1, 1, 3, 3, 3]);
        // one-hot at (1, 2, 0)
        x.data_mut()[(1 * 3 + 2) * 3] = 1.0;
        let y = conv_transpose3d(&x, &w, None, 2).unwrap();
        assert_eq!(y.shape(), [1, 2, 6, 6, 6]);
        for co in 0..2 {
            for z in 0..6 {
                for yy in 0..6 {
                    for xx in 0..6 {
                        let v = y.data()[((co * 6 + z) * 6 + yy) * 6 + xx];
                        let inside = (2..4).contains(&z) && (4..6).contains(&yy) && (0..2).contains(&xx);
                        let expect = if inside {
                            w.data()[((co * 2 + z - 2) * 2 + yy - 4) * 2 + xx]
                        } else {
                            0.0
                        };
                        assert_eq!(v, expect);
                    }
                }
            }
        }
    }

    #[test]
    fn adjoint_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(stride, k) in &[(2, 2), (1, 3), (2, 3)] {
            let w = random(&[3, 2, k, k, k], &mut rng);
            let x = random(&[2, 2, 6, 5, 7], &mut rng);
            let cx = conv3d(&x, &w, None, stride, 0).unwrap();
            let y = random(cx.shape(), &mut rng);
            let ty = conv_transpose3d(&y, &w, None, stride).unwrap();
            // transpose output covers the full image only when extents align
            if ty.shape() != x.shape() {
                continue;
            }
            let lhs = cx.dot(&y);
            let rhs = x.dot(&ty);
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let x = Tensor::<f32>::zeros(&[1, 2, 3, 3, 3]);
        let w = Tensor::zeros(&[1, 3, 3, 3, 3]);
        assert!(matches!(conv3d(&x, &w, None, 1, 1), Err(NnError::Shape(_))));
    }
}
