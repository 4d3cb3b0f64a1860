//! Length-preserving 1-D convolution and 2-wide max pooling over `n×L×c`
//! sequences.

use super::tensor::{Scalar, Tensor};
use super::{AutonetError, Result};

/// Cross-correlation with zero padding `(k-1)/2` on each side, stride 1.
///
/// `x: n×L×c_in`, `kernels: k×c_in×c_out`, `bias: c_out`.
pub fn conv1d_forward<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [n, len, c_in] = x.dims("conv1d_forward")?;
    let [k, kc_in, c_out] = kernels.dims("conv1d_forward")?;
    check_conv_shapes(c_in, k, kc_in, c_out, bias)?;
    let pad = (k - 1) / 2;
    let (xv, kv) = (x.data(), kernels.data());
    let mut out = vec![T::zero(); n * len * c_out];
    for s in 0..n {
        for t in 0..len {
            let o = &mut out[(s * len + t) * c_out..(s * len + t + 1) * c_out];
            o.copy_from_slice(bias.data());
            for j in 0..k {
                let Some(src) = (t + j).checked_sub(pad).filter(|&p| p < len) else {
                    continue;
                };
                let xin = &xv[(s * len + src) * c_in..(s * len + src + 1) * c_in];
                for (ci, &xval) in xin.iter().enumerate() {
                    let krow = &kv[(j * c_in + ci) * c_out..(j * c_in + ci + 1) * c_out];
                    for (ov, &kw) in o.iter_mut().zip(krow) {
                        *ov = *ov + xval * kw;
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n, len, c_out], out)
}

fn check_conv_shapes<T: Scalar>(
    c_in: usize,
    k: usize,
    kc_in: usize,
    c_out: usize,
    bias: &Tensor<T>,
) -> Result<()> {
    if k % 2 == 0 {
        return Err(AutonetError::InvalidArgument(format!(
            "conv1d kernel width must be odd, got {k}"
        )));
    }
    if kc_in != c_in || bias.shape() != [c_out] {
        return Err(AutonetError::ShapeMismatch {
            op: "conv1d",
            expected: vec![k, c_in, c_out],
            got: vec![k, kc_in, bias.len()],
        });
    }
    Ok(())
}

pub struct Conv1dGrads<T> {
    pub dx: Tensor<T>,
    pub dkernels: Tensor<T>,
    pub dbias: Tensor<T>,
}

pub fn conv1d_backward<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<Conv1dGrads<T>> {
    let [n, len, c_in] = x.dims("conv1d_backward")?;
    let [k, _, c_out] = kernels.dims("conv1d_backward")?;
    if dy.shape() != [n, len, c_out] {
        return Err(AutonetError::ShapeMismatch {
            op: "conv1d_backward",
            expected: vec![n, len, c_out],
            got: dy.shape().to_vec(),
        });
    }
    let pad = (k - 1) / 2;
    let (xv, kv, gv) = (x.data(), kernels.data(), dy.data());
    let mut dx = vec![T::zero(); xv.len()];
    let mut dk = vec![T::zero(); kv.len()];
    let mut db = vec![T::zero(); c_out];
    for s in 0..n {
        for t in 0..len {
            let g = &gv[(s * len + t) * c_out..(s * len + t + 1) * c_out];
            for (acc, &gi) in db.iter_mut().zip(g) {
                *acc = *acc + gi;
            }
            for j in 0..k {
                let Some(src) = (t + j).checked_sub(pad).filter(|&p| p < len) else {
                    continue;
                };
                let base = (s * len + src) * c_in;
                for ci in 0..c_in {
                    let kidx = (j * c_in + ci) * c_out;
                    let krow = &kv[kidx..kidx + c_out];
                    let xval = xv[base + ci];
                    let mut acc = T::zero();
                    for ((dkv, &kw), &gi) in dk[kidx..kidx + c_out].iter_mut().zip(krow).zip(g) {
                        *dkv = *dkv + xval * gi;
                        acc = acc + kw * gi;
                    }
                    dx[base + ci] = dx[base + ci] + acc;
                }
            }
        }
    }
    Ok(Conv1dGrads {
        dx: Tensor::from_vec(x.shape(), dx)?,
        dkernels: Tensor::from_vec(kernels.shape(), dk)?,
        dbias: Tensor::from_vec(&[c_out], db)?,
    })
}

/// Max pooling with window 2 and stride 2 along the sequence axis. A trailing
/// odd element is dropped. Also returns the flat source index of each output.
pub fn maxpool1d<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let [n, len, c] = x.dims("maxpool1d")?;
    if len < 2 {
        return Err(AutonetError::InvalidArgument(format!(
            "maxpool1d needs sequence length >= 2, got {len}"
        )));
    }
    let out_len = len / 2;
    let xv = x.data();
    let mut out = Vec::with_capacity(n * out_len * c);
    let mut argmax = Vec::with_capacity(n * out_len * c);
    for s in 0..n {
        for t in 0..out_len {
            for ch in 0..c {
                let a = (s * len + 2 * t) * c + ch;
                let b = a + c;
                // first element wins ties
                let idx = if xv[b] > xv[a] { b } else { a };
                out.push(xv[idx]);
                argmax.push(idx);
            }
        }
    }
    Ok((Tensor::from_vec(&[n, out_len, c], out)?, argmax))
}

pub fn maxpool1d_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    if dy.len() != argmax.len() {
        return Err(AutonetError::ShapeMismatch {
            op: "maxpool1d_backward",
            expected: vec![argmax.len()],
            got: dy.shape().to_vec(),
        });
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(dy.data()) {
        d[idx] = d[idx] + g;
    }
    Ok(dx)
}
