use super::{NnError, Scalar, Tensor};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Gradient of relu given its forward output.
pub fn relu_backward<T: Scalar>(out: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = out.data().iter().zip(grad_out.data()).map(|(&y, &g)| if y > T::zero() { g } else { T::zero() }).collect();
    Tensor::from_vec(out.shape(), data).expect("same shape")
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| {
        // split by sign so exp never overflows
        if v >= T::zero() {
            T::one() / (T::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (T::one() + e)
        }
    })
}

pub fn sigmoid_backward<T: Scalar>(out: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = out.data().iter().zip(grad_out.data()).map(|(&y, &g)| g * y * (T::one() - y)).collect();
    Tensor::from_vec(out.shape(), data).expect("same shape")
}

fn channel_layout<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize, usize), NnError> {
    if x.shape().len() < 2 {
        return Err(NnError::Shape(format!("expected [N, C, ...], got {:?}", x.shape())));
    }
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let inner = x.shape()[2..].iter().product();
    Ok((n, c, inner))
}

/// Softmax over axis 1 of an `[N, C, ...]` tensor.
pub fn softmax_channel<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (n, c, inner) = channel_layout(x)?;
    let mut out = Tensor::zeros(x.shape());
    let src = x.data();
    let dst = out.data_mut();
    for b in 0..n {
        let base = b * c * inner;
        for v in 0..inner {
            let mut m = T::neg_infinity();
            for k in 0..c {
                m = m.max(src[base + k * inner + v]);
            }
            let mut sum = T::zero();
            for k in 0..c {
                let e = (src[base + k * inner + v] - m).exp();
                dst[base + k * inner + v] = e;
                sum = sum + e;
            }
            for k in 0..c {
                dst[base + k * inner + v] = dst[base + k * inner + v] / sum;
            }
        }
    }
    Ok(out)
}

pub fn softmax_channel_backward<T: Scalar>(out: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (n, c, inner) = channel_layout(out)?;
    if grad_out.shape() != out.shape() {
        return Err(NnError::Shape("softmax backward: gradient shape".into()));
    }
    let mut gx = Tensor::zeros(out.shape());
    let (y, g) = (out.data(), grad_out.data());
    let dst = gx.data_mut();
    for b in 0..n {
        let base = b * c * inner;
        for v in 0..inner {
            let mut dot = T::zero();
            for k in 0..c {
                dot = dot + y[base + k * inner + v] * g[base + k * inner + v];
            }
            for k in 0..c {
                let i = base + k * inner + v;
                dst[i] = y[i] * (g[i] - dot);
            }
        }
    }
    Ok(gx)
}

/// Concatenates two `[N, C, ...]` tensors along the channel axis.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (n, ca, inner) = channel_layout(a)?;
    let (nb, cb, inner_b) = channel_layout(b)?;
    if n != nb || inner != inner_b || a.shape()[2..] != b.shape()[2..] {
        return Err(NnError::Shape(format!("concat {:?} with {:?}", a.shape(), b.shape())));
    }
    let mut data = Vec::with_capacity(a.numel() + b.numel());
    for s in 0..n {
        data.extend_from_slice(&a.data()[s * ca * inner..(s + 1) * ca * inner]);
        data.extend_from_slice(&b.data()[s * cb * inner..(s + 1) * cb * inner]);
    }
    let mut shape = a.shape().to_vec();
    shape[1] = ca + cb;
    Tensor::from_vec(&shape, data)
}

/// Splits an upstream gradient back into the `a` and `b` parts of [`concat_channels`].
pub fn concat_channels_backward<T: Scalar>(grad_out: &Tensor<T>, channels_a: usize) -> Result<(Tensor<T>, Tensor<T>), NnError> {
    let c = grad_out.shape().get(1).copied().unwrap_or(0);
    Ok((grad_out.slice_channels(0, channels_a)?, grad_out.slice_channels(channels_a, c)?))
}

/// Adds `bias[n, c]` to every voxel of channel `c` in sample `n`.
pub fn add_channel_bias<T: Scalar>(x: &mut Tensor<T>, bias: &Tensor<T>) -> Result<(), NnError> {
    let (n, c, inner) = channel_layout(x)?;
    if bias.shape() != [n, c] {
        return Err(NnError::Shape(format!("channel bias {:?} for input {:?}", bias.shape(), x.shape())));
    }
    for (i, &b) in bias.data().iter().enumerate() {
        x.data_mut()[i * inner..(i + 1) * inner].iter_mut().for_each(|v| *v = *v + b);
    }
    Ok(())
}

pub fn channel_bias_backward<T: Scalar>(grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (n, c, inner) = channel_layout(grad_out)?;
    let data = (0..n * c).map(|i| grad_out.data()[i * inner..(i + 1) * inner].iter().copied().sum()).collect();
    Tensor::from_vec(&[n, c], data)
}
