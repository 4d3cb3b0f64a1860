use super::tensor::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, Scalar, Tensor};
use super::{AutonetError, Result};

/// `y = x·W + b` for `x: n×d`, `W: d×m`, `b: m`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, d] = x.dims("dense_forward")?;
    let [wd, m] = w.dims("dense_forward")?;
    if wd != d || b.shape() != [m] {
        return Err(AutonetError::ShapeMismatch {
            op: "dense_forward",
            expected: vec![d, m],
            got: [w.shape(), b.shape()].concat(),
        });
    }
    let mut out = Vec::with_capacity(n * m);
    for _ in 0..n {
        out.extend_from_slice(b.data());
    }
    matmul_acc(x.data(), w.data(), &mut out, n, d, m);
    Tensor::from_vec(&[n, m], out)
}

pub struct DenseGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

pub fn dense_backward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, dy: &Tensor<T>) -> Result<DenseGrads<T>> {
    let [n, d] = x.dims("dense_backward")?;
    let [_, m] = w.dims("dense_backward")?;
    if dy.shape() != [n, m] {
        return Err(AutonetError::ShapeMismatch {
            op: "dense_backward",
            expected: vec![n, m],
            got: dy.shape().to_vec(),
        });
    }
    let mut dw = Tensor::zeros(&[d, m]);
    matmul_at_b_acc(x.data(), dy.data(), dw.data_mut(), n, d, m);
    let mut db = Tensor::zeros(&[m]);
    for row in dy.data().chunks(m) {
        for (acc, &g) in db.data_mut().iter_mut().zip(row) {
            *acc = *acc + g;
        }
    }
    let mut dx = Tensor::zeros(&[n, d]);
    matmul_a_bt_acc(dy.data(), w.data(), dx.data_mut(), n, m, d);
    Ok(DenseGrads { dx, dw, db })
}
