use super::{NnError, Scalar, Tensor};

/// Flat input offset of the winning element for every pooled output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    argmax: Vec<u32>,
}

/// Max pooling with a cubic window. Each spatial extent must be divisible by
/// `stride` and `window == stride` is the supported layout.
pub fn maxpool3d<T: Scalar>(input: &Tensor<T>, window: usize, stride: usize) -> Result<(Tensor<T>, PoolIndices), NnError> {
    let [n, c, d, h, w] = input.dims5()?;
    if window == 0 || stride == 0 || window != stride {
        return Err(NnError::Shape(format!("maxpool3d: window {window} / stride {stride} unsupported")));
    }
    if d % stride != 0 || h % stride != 0 || w % stride != 0 {
        return Err(NnError::Shape(format!(
            "maxpool3d: spatial dims {:?} not divisible by {stride}",
            [d, h, w]
        )));
    }
    let (od, oh, ow) = (d / stride, h / stride, w / stride);
    let mut out = Tensor::zeros(&[n, c, od, oh, ow]);
    let mut argmax = vec![0u32; out.numel()];
    let x = input.data();
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * d * h * w;
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let first = base + ((z * stride) * h + y * stride) * w + xx * stride;
                    let mut best = x[first];
                    let mut best_idx = first;
                    for a in 0..window {
                        for b in 0..window {
                            let row = base + ((z * stride + a) * h + y * stride + b) * w + xx * stride;
                            for cc in 0..window {
                                let v = x[row + cc];
                                // strict comparison keeps the first maximum in scan order
                                if v > best {
                                    best = v;
                                    best_idx = row + cc;
                                }
                            }
                        }
                    }
                    out.data_mut()[o] = best;
                    argmax[o] = best_idx as u32;
                    o += 1;
                }
            }
        }
    }
    Ok((out, PoolIndices { input_shape: input.shape().to_vec(), argmax }))
}

/// Routes each output gradient to the input element that won the forward max.
pub fn maxpool3d_backward<T: Scalar>(indices: &PoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    if grad_out.numel() != indices.argmax.len() {
        return Err(NnError::Shape("maxpool3d backward: gradient does not match pooled shape".into()));
    }
    let mut gx = Tensor::zeros(&indices.input_shape);
    for (&i, &g) in indices.argmax.iter().zip(grad_out.data()) {
        let slot = &mut gx.data_mut()[i as usize];
        *slot = *slot + g;
    }
    Ok(gx)
}
