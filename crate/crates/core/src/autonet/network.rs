//! A sequential stack of layers with a recording tape for reverse-mode
//! gradients.

use rand::{Rng, RngCore};

use super::activation::relu;
use super::conv::{conv1d_backward, conv1d_forward, maxpool1d, maxpool1d_backward};
use super::dense::{dense_backward, dense_forward};
use super::lstm::{
    bilstm_backward, bilstm_forward_traced, lstm_sequence, lstm_sequence_backward, BiLstmTrace,
    LstmCellParams, LstmTrace,
};
use super::tensor::{Scalar, Tensor};
use super::{AutonetError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T = f32> {
    /// Reshape each sample to the given per-sample shape.
    Reshape(Vec<usize>),
    Conv1d { kernels: Tensor<T>, bias: Tensor<T> },
    MaxPool1d,
    Relu,
    Lstm(LstmCellParams<T>),
    BiLstm { fwd: LstmCellParams<T>, bwd: LstmCellParams<T> },
    /// `n×L×2h → n×2h`: the forward half at the last position and the backward
    /// half at the first, i.e. each direction's state after reading the whole
    /// sequence.
    BiLstmSummary,
    /// `n×L×c → n×c` at the last position.
    LastStep,
    Dense { weight: Tensor<T>, bias: Tensor<T> },
    /// Inverted dropout; identity at inference.
    Dropout(f64),
}

impl<T: Scalar> Layer<T> {
    fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::Conv1d { kernels, bias } => vec![("kernels", kernels), ("bias", bias)],
            Layer::Lstm(p) => vec![("w", &p.w), ("u", &p.u), ("b", &p.b)],
            Layer::BiLstm { fwd, bwd } => vec![
                ("fwd.w", &fwd.w),
                ("fwd.u", &fwd.u),
                ("fwd.b", &fwd.b),
                ("bwd.w", &bwd.w),
                ("bwd.u", &bwd.u),
                ("bwd.b", &bwd.b),
            ],
            Layer::Dense { weight, bias } => vec![("weight", weight), ("bias", bias)],
            _ => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv1d { kernels, bias } => vec![kernels, bias],
            Layer::Lstm(p) => vec![&mut p.w, &mut p.u, &mut p.b],
            Layer::BiLstm { fwd, bwd } => vec![
                &mut fwd.w,
                &mut fwd.u,
                &mut fwd.b,
                &mut bwd.w,
                &mut bwd.u,
                &mut bwd.b,
            ],
            Layer::Dense { weight, bias } => vec![weight, bias],
            _ => Vec::new(),
        }
    }

    fn cast<U: Scalar>(&self) -> Layer<U> {
        let cell = |p: &LstmCellParams<T>| LstmCellParams {
            w: p.w.cast(),
            u: p.u.cast(),
            b: p.b.cast(),
        };
        match self {
            Layer::Reshape(s) => Layer::Reshape(s.clone()),
            Layer::Conv1d { kernels, bias } => Layer::Conv1d {
                kernels: kernels.cast(),
                bias: bias.cast(),
            },
            Layer::MaxPool1d => Layer::MaxPool1d,
            Layer::Relu => Layer::Relu,
            Layer::Lstm(p) => Layer::Lstm(cell(p)),
            Layer::BiLstm { fwd, bwd } => Layer::BiLstm {
                fwd: cell(fwd),
                bwd: cell(bwd),
            },
            Layer::BiLstmSummary => Layer::BiLstmSummary,
            Layer::LastStep => Layer::LastStep,
            Layer::Dense { weight, bias } => Layer::Dense {
                weight: weight.cast(),
                bias: bias.cast(),
            },
            Layer::Dropout(r) => Layer::Dropout(*r),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Layer::Reshape(_) => "reshape",
            Layer::Conv1d { .. } => "conv1d",
            Layer::MaxPool1d => "maxpool1d",
            Layer::Relu => "relu",
            Layer::Lstm(_) => "lstm",
            Layer::BiLstm { .. } => "bilstm",
            Layer::BiLstmSummary => "bilstm_summary",
            Layer::LastStep => "last_step",
            Layer::Dense { .. } => "dense",
            Layer::Dropout(_) => "dropout",
        }
    }
}

/// Whether a forward pass is training (dropout active, drawing from the given
/// generator) or pure inference.
pub enum Mode<'a> {
    Inference,
    Train(&'a mut dyn RngCore),
}

#[derive(Clone, Debug)]
enum Cache<T> {
    Shape(Vec<usize>),
    Input(Tensor<T>),
    Pool { in_shape: Vec<usize>, argmax: Vec<usize> },
    Relu(Tensor<T>),
    Lstm(LstmTrace<T>),
    BiLstm(BiLstmTrace<T>),
    Dropout(Option<Vec<T>>),
}

/// Intermediate values recorded by [`Network::forward_recorded`], consumed by
/// [`Network::backward`].
#[derive(Clone, Debug, Default)]
pub struct GradientTape<T> {
    caches: Vec<Cache<T>>,
}

impl<T: Scalar> GradientTape<T> {
    pub fn new() -> Self {
        Self { caches: Vec::new() }
    }

    pub fn is_recorded(&self) -> bool {
        !self.caches.is_empty()
    }

    pub fn clear(&mut self) {
        self.caches.clear();
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T = f32> {
    layers: Vec<(String, Layer<T>)>,
}

impl<T: Scalar> Default for Network<T> {
    fn default() -> Self {
        Self { layers: Vec::new() }
    }
}

impl<T: Scalar> Network<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, layer: Layer<T>) -> &mut Self {
        self.layers.push((name.into(), layer));
        self
    }

    pub fn with(mut self, name: impl Into<String>, layer: Layer<T>) -> Self {
        self.push(name, layer);
        self
    }

    pub fn layers(&self) -> impl Iterator<Item = (&str, &Layer<T>)> {
        self.layers.iter().map(|(n, l)| (n.as_str(), l))
    }

    /// Trainable parameters as `layer.param` names in a fixed order.
    pub fn params(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .flat_map(|(name, l)| {
                l.params()
                    .into_iter()
                    .map(move |(p, t)| (format!("{name}.{p}"), t))
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|(_, l)| l.params_mut())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self
                .layers
                .iter()
                .map(|(n, l)| (n.clone(), l.cast()))
                .collect(),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode<'_>) -> Result<Tensor<T>> {
        self.run(x, mode, None)
    }

    pub fn forward_recorded(
        &self,
        x: &Tensor<T>,
        mode: Mode<'_>,
        tape: &mut GradientTape<T>,
    ) -> Result<Tensor<T>> {
        tape.clear();
        self.run(x, mode, Some(tape))
    }

    fn run(
        &self,
        x: &Tensor<T>,
        mut mode: Mode<'_>,
        mut tape: Option<&mut GradientTape<T>>,
    ) -> Result<Tensor<T>> {
        let mut cur = x.clone();
        for (_, layer) in &self.layers {
            let (out, cache) = forward_layer(layer, cur, &mut mode, tape.is_some())?;
            out.ensure_finite(layer.kind())?;
            if let (Some(t), Some(c)) = (tape.as_deref_mut(), cache) {
                t.caches.push(c);
            }
            cur = out;
        }
        Ok(cur)
    }

    /// Gradients of every parameter (in [`Network::params`] order) and of the
    /// network input, given the upstream gradient `dout` of the output.
    pub fn backward(&self, tape: &GradientTape<T>, dout: &Tensor<T>) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
        if tape.caches.len() != self.layers.len() || self.layers.is_empty() {
            return Err(AutonetError::BackwardBeforeForward);
        }
        let mut per_layer: Vec<Vec<Tensor<T>>> = vec![Vec::new(); self.layers.len()];
        let mut grad = dout.clone();
        for (idx, ((_, layer), cache)) in self.layers.iter().zip(&tape.caches).enumerate().rev() {
            let (dx, pgrads) = backward_layer(layer, cache, grad)?;
            per_layer[idx] = pgrads;
            grad = dx;
        }
        Ok((per_layer.into_iter().flatten().collect(), grad))
    }
}

fn forward_layer<T: Scalar>(
    layer: &Layer<T>,
    x: Tensor<T>,
    mode: &mut Mode<'_>,
    record: bool,
) -> Result<(Tensor<T>, Option<Cache<T>>)> {
    let keep = |c: Cache<T>| if record { Some(c) } else { None };
    Ok(match layer {
        Layer::Reshape(shape) => {
            let n = x.shape()[0];
            let in_shape = x.shape().to_vec();
            let full: Vec<usize> = std::iter::once(n).chain(shape.iter().copied()).collect();
            (x.reshape(&full)?, keep(Cache::Shape(in_shape)))
        }
        Layer::Conv1d { kernels, bias } => {
            let y = conv1d_forward(&x, kernels, bias)?;
            (y, keep(Cache::Input(x)))
        }
        Layer::MaxPool1d => {
            let (y, argmax) = maxpool1d(&x)?;
            (
                y,
                keep(Cache::Pool {
                    in_shape: x.shape().to_vec(),
                    argmax,
                }),
            )
        }
        Layer::Relu => {
            let y = relu(&x);
            let c = keep(Cache::Relu(y.clone()));
            (y, c)
        }
        Layer::Lstm(p) => {
            let (y, trace) = lstm_sequence(&x, p, false)?;
            (y, keep(Cache::Lstm(trace)))
        }
        Layer::BiLstm { fwd, bwd } => {
            let (y, trace) = bilstm_forward_traced(&x, fwd, bwd)?;
            (y, keep(Cache::BiLstm(trace)))
        }
        Layer::BiLstmSummary => {
            let [n, len, w] = x.dims("bilstm_summary")?;
            let h = w / 2;
            let mut out = Vec::with_capacity(n * w);
            for s in 0..n {
                let last = &x.data()[(s * len + len - 1) * w..(s * len + len) * w];
                let first = &x.data()[s * len * w..(s * len + 1) * w];
                out.extend_from_slice(&last[..h]);
                out.extend_from_slice(&first[h..]);
            }
            (Tensor::from_vec(&[n, w], out)?, keep(Cache::Shape(x.shape().to_vec())))
        }
        Layer::LastStep => {
            let [n, len, c] = x.dims("last_step")?;
            let mut out = Vec::with_capacity(n * c);
            for s in 0..n {
                out.extend_from_slice(&x.data()[(s * len + len - 1) * c..(s * len + len) * c]);
            }
            (Tensor::from_vec(&[n, c], out)?, keep(Cache::Shape(x.shape().to_vec())))
        }
        Layer::Dense { weight, bias } => {
            let y = dense_forward(&x, weight, bias)?;
            (y, keep(Cache::Input(x)))
        }
        Layer::Dropout(rate) => match mode {
            Mode::Train(rng) if *rate > 0.0 => {
                let keep_p = 1.0 - rate;
                let scale = T::lit(1.0 / keep_p);
                let mask: Vec<T> = (0..x.len())
                    .map(|_| {
                        if rng.gen::<f64>() < keep_p {
                            scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                let mut y = x;
                for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
                    *v = *v * m;
                }
                (y, keep(Cache::Dropout(Some(mask))))
            }
            _ => (x, keep(Cache::Dropout(None))),
        },
    })
}

fn backward_layer<T: Scalar>(
    layer: &Layer<T>,
    cache: &Cache<T>,
    dy: Tensor<T>,
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    let mismatch = || AutonetError::InvalidArgument(format!("tape entry does not match layer {}", layer.kind()));
    Ok(match (layer, cache) {
        (Layer::Reshape(_), Cache::Shape(in_shape)) => (dy.reshape(in_shape)?, Vec::new()),
        (Layer::Conv1d { kernels, .. }, Cache::Input(x)) => {
            let g = conv1d_backward(x, kernels, &dy)?;
            (g.dx, vec![g.dkernels, g.dbias])
        }
        (Layer::MaxPool1d, Cache::Pool { in_shape, argmax }) => {
            (maxpool1d_backward(in_shape, argmax, &dy)?, Vec::new())
        }
        (Layer::Relu, Cache::Relu(y)) => {
            let mut dx = dy;
            for (g, &v) in dx.data_mut().iter_mut().zip(y.data()) {
                if v <= T::zero() {
                    *g = T::zero();
                }
            }
            (dx, Vec::new())
        }
        (Layer::Lstm(p), Cache::Lstm(trace)) => {
            let g = lstm_sequence_backward(p, trace, &dy)?;
            (g.dx, vec![g.dw, g.du, g.db])
        }
        (Layer::BiLstm { fwd, bwd }, Cache::BiLstm(trace)) => {
            let g = bilstm_backward(fwd, bwd, trace, &dy)?;
            (
                g.dx,
                vec![g.fwd.dw, g.fwd.du, g.fwd.db, g.bwd.dw, g.bwd.du, g.bwd.db],
            )
        }
        (Layer::BiLstmSummary, Cache::Shape(in_shape)) => {
            let (n, len, w) = (in_shape[0], in_shape[1], in_shape[2]);
            let h = w / 2;
            let mut dx = Tensor::zeros(in_shape);
            let d = dx.data_mut();
            for s in 0..n {
                let g = dy.row(s);
                let last = (s * len + len - 1) * w;
                let first = s * len * w;
                for j in 0..h {
                    d[last + j] = d[last + j] + g[j];
                    d[first + h + j] = d[first + h + j] + g[h + j];
                }
            }
            (dx, Vec::new())
        }
        (Layer::LastStep, Cache::Shape(in_shape)) => {
            let (n, len, c) = (in_shape[0], in_shape[1], in_shape[2]);
            let mut dx = Tensor::zeros(in_shape);
            for s in 0..n {
                dx.data_mut()[(s * len + len - 1) * c..(s * len + len) * c].copy_from_slice(dy.row(s));
            }
            (dx, Vec::new())
        }
        (Layer::Dense { weight, .. }, Cache::Input(x)) => {
            let g = dense_backward(x, weight, &dy)?;
            (g.dx, vec![g.dw, g.db])
        }
        (Layer::Dropout(_), Cache::Dropout(mask)) => {
            let mut dx = dy;
            if let Some(mask) = mask {
                for (g, &m) in dx.data_mut().iter_mut().zip(mask) {
                    *g = *g * m;
                }
            }
            (dx, Vec::new())
        }
        _ => return Err(mismatch()),
    })
}

/// Uniform initialization in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut dyn RngCore,
) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::lit(rng.gen_range(-limit..limit))).collect();
    Tensor::from_vec(shape, data).expect("shape and length agree")
}
