use super::{NnError, Scalar, Tensor};

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Per-sample, per-channel standardization without affine parameters.
/// Returns the output and the per-(n, c) inverse standard deviations.
pub fn instance_norm<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>), NnError> {
    if x.shape().len() < 3 {
        return Err(NnError::Shape(format!("instance_norm on {:?}", x.shape())));
    }
    let planes = x.shape()[0] * x.shape()[1];
    let inner = x.numel() / planes.max(1);
    let mut out = Tensor::zeros(x.shape());
    let mut inv_std = Vec::with_capacity(planes);
    let count = T::from_f64(inner as f64);
    for p in 0..planes {
        let src = &x.data()[p * inner..(p + 1) * inner];
        let mean = src.iter().copied().sum::<T>() / count;
        let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
        let inv = T::one() / (var + T::from_f64(INSTANCE_NORM_EPS)).sqrt();
        for (d, &v) in out.data_mut()[p * inner..(p + 1) * inner].iter_mut().zip(src) {
            *d = (v - mean) * inv;
        }
        inv_std.push(inv);
    }
    Ok((out, inv_std))
}

pub fn instance_norm_backward<T: Scalar>(out: &Tensor<T>, inv_std: &[T], grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    if grad_out.shape() != out.shape() {
        return Err(NnError::Shape("instance_norm backward: gradient shape".into()));
    }
    let planes = inv_std.len();
    let inner = out.numel() / planes.max(1);
    let count = T::from_f64(inner as f64);
    let mut gx = Tensor::zeros(out.shape());
    for p in 0..planes {
        let y = &out.data()[p * inner..(p + 1) * inner];
        let g = &grad_out.data()[p * inner..(p + 1) * inner];
        let mean_g = g.iter().copied().sum::<T>() / count;
        let mean_gy = g.iter().zip(y).map(|(&a, &b)| a * b).sum::<T>() / count;
        for ((d, &gi), &yi) in gx.data_mut()[p * inner..(p + 1) * inner].iter_mut().zip(g).zip(y) {
            *d = inv_std[p] * (gi - mean_g - yi * mean_gy);
        }
    }
    Ok(gx)
}
