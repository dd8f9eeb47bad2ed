use super::{NnError, Scalar, Tensor};

#[derive(Clone, Debug)]
pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// `y = x·Wᵀ + b` with `x: [N, in]`, `W: [out, in]`, `b: [out]`.
pub fn linear<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (n, fin, fout) = check(x, weight)?;
    if bias.shape() != [fout] {
        return Err(NnError::Shape(format!("linear bias {:?}, expected [{fout}]", bias.shape())));
    }
    let mut y = Tensor::zeros(&[n, fout]);
    for r in 0..n {
        y.data_mut()[r * fout..(r + 1) * fout].copy_from_slice(bias.data());
    }
    T::gemm(n, fin, fout, T::one(), x.data(), (fin as isize, 1), weight.data(), (1, fin as isize), T::one(), y.data_mut(), (fout as isize, 1));
    Ok(y)
}

pub fn linear_backward<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, grad_out: &Tensor<T>) -> Result<LinearGrads<T>, NnError> {
    let (n, fin, fout) = check(x, weight)?;
    if grad_out.shape() != [n, fout] {
        return Err(NnError::Shape(format!("linear backward: grad {:?}", grad_out.shape())));
    }
    let mut gx = Tensor::zeros(&[n, fin]);
    T::gemm(n, fout, fin, T::one(), grad_out.data(), (fout as isize, 1), weight.data(), (fin as isize, 1), T::zero(), gx.data_mut(), (fin as isize, 1));
    let mut gw = Tensor::zeros(&[fout, fin]);
    T::gemm(fout, n, fin, T::one(), grad_out.data(), (1, fout as isize), x.data(), (fin as isize, 1), T::zero(), gw.data_mut(), (fin as isize, 1));
    let gb = (0..fout).map(|o| (0..n).map(|r| grad_out.data()[r * fout + o]).sum()).collect();
    Ok(LinearGrads { input: gx, weight: gw, bias: Tensor::from_vec(&[fout], gb)? })
}

fn check<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>) -> Result<(usize, usize, usize), NnError> {
    match (x.shape(), weight.shape()) {
        (&[n, fin], &[fout, win]) if fin == win => Ok((n, fin, fout)),
        (xs, ws) => Err(NnError::Shape(format!("linear input {xs:?} with weight {ws:?}"))),
    }
}
