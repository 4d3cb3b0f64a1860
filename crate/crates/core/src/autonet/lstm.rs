//! LSTM cells, full-sequence unrolling with backpropagation through time, and
//! the bidirectional wrapper.
//!
//! Gate rows are laid out as four blocks of `h` in the order input, forget,
//! candidate, output. Every sequence starts from a zero hidden and cell state.

use super::activation::sigmoid_scalar;
use super::tensor::{dot, Scalar, Tensor};
use super::{AutonetError, Result};

/// Weights of one LSTM cell: `w: 4h×d`, `u: 4h×h`, `b: 4h`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCellParams<T = f32> {
    pub w: Tensor<T>,
    pub u: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Scalar> LstmCellParams<T> {
    pub fn new(w: Tensor<T>, u: Tensor<T>, b: Tensor<T>) -> Result<Self> {
        let p = Self { w, u, b };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w: Tensor::zeros(&[4 * hidden, input]),
            u: Tensor::zeros(&[4 * hidden, hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.shape()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        let [g, _] = self.w.dims("lstm params")?;
        let [gu, h] = self.u.dims("lstm params")?;
        if g != 4 * h || gu != g || self.b.shape() != [g] {
            return Err(AutonetError::ShapeMismatch {
                op: "lstm params",
                expected: vec![4 * h, 4 * h, 4 * h],
                got: vec![g, gu, self.b.len()],
            });
        }
        Ok(())
    }
}

/// Hidden and cell state for a batch: both `n×h`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<T = f32> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            h: Tensor::zeros(&[batch, hidden]),
            c: Tensor::zeros(&[batch, hidden]),
        }
    }
}

/// One cell update for a single sample. `gates` receives the activated
/// `[i, f, g, o]` values.
fn cell_update<T: Scalar>(
    p: &LstmCellParams<T>,
    x: &[T],
    h_prev: &[T],
    c_prev: &[T],
    gates: &mut [T],
    h_out: &mut [T],
    c_out: &mut [T],
) {
    let h = h_prev.len();
    let (d, w, u, b) = (x.len(), p.w.data(), p.u.data(), p.b.data());
    for (r, gate) in gates.iter_mut().enumerate() {
        let pre = b[r] + dot(&w[r * d..(r + 1) * d], x) + dot(&u[r * h..(r + 1) * h], h_prev);
        *gate = if (2 * h..3 * h).contains(&r) {
            pre.tanh()
        } else {
            sigmoid_scalar(pre)
        };
    }
    for j in 0..h {
        let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        c_out[j] = f * c_prev[j] + i * g;
        h_out[j] = o * c_out[j].tanh();
    }
}

/// Advances a batch of cells by one time step.
pub fn lstm_step<T: Scalar>(
    x_t: &Tensor<T>,
    prev: &LstmState<T>,
    p: &LstmCellParams<T>,
) -> Result<LstmState<T>> {
    p.validate()?;
    let [n, d] = x_t.dims("lstm_step")?;
    let h = p.hidden();
    if d != p.input_dim() || prev.h.shape() != [n, h] || prev.c.shape() != [n, h] {
        return Err(AutonetError::ShapeMismatch {
            op: "lstm_step",
            expected: vec![n, p.input_dim(), h],
            got: [x_t.shape(), prev.h.shape()].concat(),
        });
    }
    let mut next = LstmState::zeros(n, h);
    let mut gates = vec![T::zero(); 4 * h];
    let (mut hn, mut cn) = (vec![T::zero(); h], vec![T::zero(); h]);
    for s in 0..n {
        cell_update(p, x_t.row(s), prev.h.row(s), prev.c.row(s), &mut gates, &mut hn, &mut cn);
        next.h.data_mut()[s * h..(s + 1) * h].copy_from_slice(&hn);
        next.c.data_mut()[s * h..(s + 1) * h].copy_from_slice(&cn);
    }
    Ok(next)
}

/// Values saved by [`lstm_sequence`] for the backward pass. Per-step arrays
/// are indexed by sequence position, not processing order.
#[derive(Clone, Debug)]
pub struct LstmTrace<T> {
    x: Tensor<T>,
    reverse: bool,
    gates: Vec<T>,
    cs: Vec<T>,
    hs: Vec<T>,
}

fn positions(len: usize, reverse: bool) -> impl Iterator<Item = usize> {
    (0..len).map(move |k| if reverse { len - 1 - k } else { k })
}

/// Runs a cell over `x: n×L×d` left to right (or right to left when
/// `reverse`), returning the hidden state at every position: `n×L×h`.
pub fn lstm_sequence<T: Scalar>(
    x: &Tensor<T>,
    p: &LstmCellParams<T>,
    reverse: bool,
) -> Result<(Tensor<T>, LstmTrace<T>)> {
    p.validate()?;
    let [n, len, d] = x.dims("lstm_sequence")?;
    if d != p.input_dim() {
        return Err(AutonetError::ShapeMismatch {
            op: "lstm_sequence",
            expected: vec![n, len, p.input_dim()],
            got: x.shape().to_vec(),
        });
    }
    let h = p.hidden();
    let mut gates = vec![T::zero(); n * len * 4 * h];
    let mut cs = vec![T::zero(); n * len * h];
    let mut hs = vec![T::zero(); n * len * h];
    let xv = x.data();
    let (mut h_prev, mut c_prev) = (vec![T::zero(); h], vec![T::zero(); h]);
    let (mut hn, mut cn) = (vec![T::zero(); h], vec![T::zero(); h]);
    for s in 0..n {
        let mut prev: Option<usize> = None;
        for t in positions(len, reverse) {
            let cur = s * len + t;
            match prev {
                Some(q) => {
                    h_prev.copy_from_slice(&hs[q * h..(q + 1) * h]);
                    c_prev.copy_from_slice(&cs[q * h..(q + 1) * h]);
                }
                None => {
                    h_prev.fill(T::zero());
                    c_prev.fill(T::zero());
                }
            }
            cell_update(
                p,
                &xv[cur * d..(cur + 1) * d],
                &h_prev,
                &c_prev,
                &mut gates[cur * 4 * h..(cur + 1) * 4 * h],
                &mut hn,
                &mut cn,
            );
            hs[cur * h..(cur + 1) * h].copy_from_slice(&hn);
            cs[cur * h..(cur + 1) * h].copy_from_slice(&cn);
            prev = Some(cur);
        }
    }
    let out = Tensor::from_vec(&[n, len, h], hs.clone())?;
    Ok((
        out,
        LstmTrace {
            x: x.clone(),
            reverse,
            gates,
            cs,
            hs,
        },
    ))
}

#[derive(Clone, Debug)]
pub struct LstmGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub du: Tensor<T>,
    pub db: Tensor<T>,
}

/// Backpropagation through time for [`lstm_sequence`]; `dout` is the
/// gradient of the loss with respect to every emitted hidden state.
pub fn lstm_sequence_backward<T: Scalar>(
    p: &LstmCellParams<T>,
    trace: &LstmTrace<T>,
    dout: &Tensor<T>,
) -> Result<LstmGrads<T>> {
    let [n, len, d] = trace.x.dims("lstm_sequence_backward")?;
    let h = p.hidden();
    if dout.shape() != [n, len, h] {
        return Err(AutonetError::ShapeMismatch {
            op: "lstm_sequence_backward",
            expected: vec![n, len, h],
            got: dout.shape().to_vec(),
        });
    }
    let (w, u) = (p.w.data(), p.u.data());
    let (xv, gv) = (trace.x.data(), dout.data());
    let mut dx = vec![T::zero(); n * len * d];
    let mut dw = vec![T::zero(); 4 * h * d];
    let mut du = vec![T::zero(); 4 * h * h];
    let mut db = vec![T::zero(); 4 * h];
    let zeros = vec![T::zero(); h];
    let one = T::one();

    let mut da = vec![T::zero(); 4 * h];
    for s in 0..n {
        let order: Vec<usize> = positions(len, trace.reverse).collect();
        let mut dh_next = vec![T::zero(); h];
        let mut dc_next = vec![T::zero(); h];
        for k in (0..len).rev() {
            let cur = s * len + order[k];
            let prev = (k > 0).then(|| s * len + order[k - 1]);
            let (h_prev, c_prev) = match prev {
                Some(q) => (&trace.hs[q * h..(q + 1) * h], &trace.cs[q * h..(q + 1) * h]),
                None => (&zeros[..], &zeros[..]),
            };
            let gates = &trace.gates[cur * 4 * h..(cur + 1) * 4 * h];
            let c = &trace.cs[cur * h..(cur + 1) * h];
            for j in 0..h {
                let dh = gv[cur * h + j] + dh_next[j];
                let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = c[j].tanh();
                let dc = dc_next[j] + dh * o * (one - tc * tc);
                da[j] = dc * g * i * (one - i);
                da[h + j] = dc * c_prev[j] * f * (one - f);
                da[2 * h + j] = dc * i * (one - g * g);
                da[3 * h + j] = dh * tc * o * (one - o);
                dc_next[j] = dc * f;
            }
            let x_t = &xv[cur * d..(cur + 1) * d];
            let dx_t = &mut dx[cur * d..(cur + 1) * d];
            dh_next.iter_mut().for_each(|v| *v = T::zero());
            for (r, &a) in da.iter().enumerate() {
                db[r] = db[r] + a;
                if a == T::zero() {
                    continue;
                }
                let wrow = &w[r * d..(r + 1) * d];
                for ((dwv, &xj), (dxj, &wj)) in dw[r * d..(r + 1) * d]
                    .iter_mut()
                    .zip(x_t)
                    .zip(dx_t.iter_mut().zip(wrow))
                {
                    *dwv = *dwv + a * xj;
                    *dxj = *dxj + a * wj;
                }
                let urow = &u[r * h..(r + 1) * h];
                for ((duv, &hj), (dhj, &uj)) in du[r * h..(r + 1) * h]
                    .iter_mut()
                    .zip(h_prev)
                    .zip(dh_next.iter_mut().zip(urow))
                {
                    *duv = *duv + a * hj;
                    *dhj = *dhj + a * uj;
                }
            }
        }
    }
    Ok(LstmGrads {
        dx: Tensor::from_vec(&[n, len, d], dx)?,
        dw: Tensor::from_vec(&[4 * h, d], dw)?,
        du: Tensor::from_vec(&[4 * h, h], du)?,
        db: Tensor::from_vec(&[4 * h], db)?,
    })
}

#[derive(Clone, Debug)]
pub struct BiLstmTrace<T> {
    pub fwd: LstmTrace<T>,
    pub bwd: LstmTrace<T>,
}

fn check_pair<T: Scalar>(fwd: &LstmCellParams<T>, bwd: &LstmCellParams<T>) -> Result<()> {
    fwd.validate()?;
    bwd.validate()?;
    if fwd.hidden() != bwd.hidden() || fwd.input_dim() != bwd.input_dim() {
        return Err(AutonetError::ShapeMismatch {
            op: "bilstm",
            expected: vec![fwd.input_dim(), fwd.hidden()],
            got: vec![bwd.input_dim(), bwd.hidden()],
        });
    }
    Ok(())
}

/// Position `t` of the output holds the forward state after reading
/// `x[..=t]` concatenated with the backward state after reading `x[t..]`:
/// `n×L×2h`.
pub fn bilstm_forward<T: Scalar>(
    x: &Tensor<T>,
    fwd: &LstmCellParams<T>,
    bwd: &LstmCellParams<T>,
) -> Result<Tensor<T>> {
    bilstm_forward_traced(x, fwd, bwd).map(|(y, _)| y)
}

pub fn bilstm_forward_traced<T: Scalar>(
    x: &Tensor<T>,
    fwd: &LstmCellParams<T>,
    bwd: &LstmCellParams<T>,
) -> Result<(Tensor<T>, BiLstmTrace<T>)> {
    check_pair(fwd, bwd)?;
    let (yf, tf) = lstm_sequence(x, fwd, false)?;
    let (yb, tb) = lstm_sequence(x, bwd, true)?;
    let [n, len, h] = yf.dims("bilstm_forward")?;
    let mut out = Vec::with_capacity(n * len * 2 * h);
    for (rf, rb) in yf.data().chunks(h).zip(yb.data().chunks(h)) {
        out.extend_from_slice(rf);
        out.extend_from_slice(rb);
    }
    Ok((
        Tensor::from_vec(&[n, len, 2 * h], out)?,
        BiLstmTrace { fwd: tf, bwd: tb },
    ))
}

pub struct BiLstmGrads<T> {
    pub dx: Tensor<T>,
    pub fwd: LstmGrads<T>,
    pub bwd: LstmGrads<T>,
}

pub fn bilstm_backward<T: Scalar>(
    fwd: &LstmCellParams<T>,
    bwd: &LstmCellParams<T>,
    trace: &BiLstmTrace<T>,
    dout: &Tensor<T>,
) -> Result<BiLstmGrads<T>> {
    let [n, len, w] = dout.dims("bilstm_backward")?;
    let h = fwd.hidden();
    if w != 2 * h {
        return Err(AutonetError::ShapeMismatch {
            op: "bilstm_backward",
            expected: vec![n, len, 2 * h],
            got: dout.shape().to_vec(),
        });
    }
    let mut df = Vec::with_capacity(n * len * h);
    let mut dbk = Vec::with_capacity(n * len * h);
    for row in dout.data().chunks(2 * h) {
        df.extend_from_slice(&row[..h]);
        dbk.extend_from_slice(&row[h..]);
    }
    let gf = lstm_sequence_backward(fwd, &trace.fwd, &Tensor::from_vec(&[n, len, h], df)?)?;
    let gb = lstm_sequence_backward(bwd, &trace.bwd, &Tensor::from_vec(&[n, len, h], dbk)?)?;
    let mut dx = gf.dx.clone();
    dx.add_assign(&gb.dx)?;
    Ok(BiLstmGrads { dx, fwd: gf, bwd: gb })
}
