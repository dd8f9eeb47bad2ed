use super::{NnError, Scalar, Tensor};

/// Probabilities entering BCE are clamped to `[BCE_EPS, 1 - BCE_EPS]`.
pub const BCE_EPS: f64 = 1e-7;

/// A scalar loss and its gradient with respect to the prediction.
#[derive(Clone, Debug)]
pub struct Loss<T> {
    pub value: T,
    pub grad: Tensor<T>,
}

fn same_shape<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, what: &str) -> Result<usize, NnError> {
    if pred.shape() != target.shape() {
        return Err(NnError::Shape(format!("{what}: prediction {:?} vs target {:?}", pred.shape(), target.shape())));
    }
    if pred.numel() == 0 {
        return Err(NnError::Shape(format!("{what}: empty input")));
    }
    Ok(pred.numel())
}

/// Mean binary cross-entropy.
pub fn bce<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Loss<T>, NnError> {
    let n = same_shape(pred, target, "bce")?;
    let lo = T::from_f64(BCE_EPS);
    let hi = T::one() - lo;
    let inv_n = T::one() / T::from_f64(n as f64);
    let mut value = T::zero();
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let pc = p.max(lo).min(hi);
        value = value - (t * pc.ln() + (T::one() - t) * (T::one() - pc).ln());
        if p >= lo && p <= hi {
            *g = (pc - t) / (pc * (T::one() - pc)) * inv_n;
        }
    }
    Ok(Loss { value: value * inv_n, grad })
}

/// `1 - (2Σpt + s) / (Σp + Σt + s)`.
pub fn dice_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, smooth: f64) -> Result<Loss<T>, NnError> {
    same_shape(pred, target, "dice_loss")?;
    let s = T::from_f64(smooth);
    let two = T::from_f64(2.0);
    let inter: T = pred.data().iter().zip(target.data()).map(|(&p, &t)| p * t).sum();
    let denom = pred.data().iter().copied().sum::<T>() + target.data().iter().copied().sum::<T>() + s;
    let num = two * inter + s;
    let grad = target.map(|t| -(two * t * denom - num) / (denom * denom));
    Ok(Loss { value: T::one() - num / denom, grad })
}

/// `1 - (2Σpt + s) / (Σp² + Σt² + s)`: vanishes whenever `pred == target`,
/// including for soft targets.
pub fn soft_dice_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, smooth: f64) -> Result<Loss<T>, NnError> {
    same_shape(pred, target, "soft_dice_loss")?;
    let s = T::from_f64(smooth);
    let two = T::from_f64(2.0);
    let inter: T = pred.data().iter().zip(target.data()).map(|(&p, &t)| p * t).sum();
    let denom = pred.data().iter().map(|&p| p * p).sum::<T>() + target.data().iter().map(|&t| t * t).sum::<T>() + s;
    let num = two * inter + s;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| -(two * t * denom - num * two * p) / (denom * denom))
        .collect();
    Ok(Loss { value: T::one() - num / denom, grad: Tensor::from_vec(pred.shape(), data)? })
}

/// Mean squared error.
pub fn mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Loss<T>, NnError> {
    let n = same_shape(pred, target, "mse")?;
    let inv_n = T::one() / T::from_f64(n as f64);
    let two = T::from_f64(2.0);
    let mut value = T::zero();
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            value = value + d * d;
            two * d * inv_n
        })
        .collect();
    Ok(Loss { value: value * inv_n, grad: Tensor::from_vec(pred.shape(), data)? })
}
