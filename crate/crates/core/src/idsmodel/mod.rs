//! The CNN-BiLSTM detector: architecture, seeded training, prediction and
//! checkpoints.
//!
//! Default stack for a `W`-feature input:
//!
//! ```text
//! reshape n×W → n×W×1
//! conv1d (kernel 3, same padding) + ReLU → n×W×32
//! maxpool (2)                            → n×W/2×32
//! BiLSTM (32 per direction)              → n×W/2×64
//! final state of each direction          → n×64
//! dense 64 + ReLU, dropout 0.3
//! head: 1 logit (sigmoid) or 10 logits (softmax)
//! ```
//!
//! The network itself emits logits; [`predict`] applies the head activation.

mod checkpoint;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, encoder_digest, load_checkpoint, save_checkpoint,
    ModelCheckpoint, TrainingMetadata, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autonet::{
    glorot_uniform, adam_step, softmax, sigmoid, weighted_cross_entropy_with_logits, AdamState,
    AutonetError, GradientTape, Layer, LstmCellParams, Mode, Network, Tensor,
};
use crate::data::{class_weights_for, DataError, FeatureFrame, LabelView};
use crate::rng_stream;

#[derive(Debug, thiserror::Error)]
pub enum IdsError {
    #[error("invalid architecture: {0}")]
    InvalidSpec(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("frame has {got} features but the model expects {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("frame has no rows")]
    EmptyFrame,
    #[error("model has a {model} head but the task is {task}")]
    HeadMismatch { model: Head, task: LabelView },
    #[error("not a model checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Autonet(#[from] AutonetError),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = IdsError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// One sigmoid output, attack probability.
    Binary,
    /// Ten softmax outputs over the traffic categories.
    Multi,
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::Binary => 1,
            Head::Multi => 10,
        }
    }

    pub fn task(self) -> LabelView {
        match self {
            Head::Binary => LabelView::Binary,
            Head::Multi => LabelView::Multi,
        }
    }
}

impl From<LabelView> for Head {
    fn from(v: LabelView) -> Self {
        match v {
            LabelView::Binary => Head::Binary,
            LabelView::Multi => Head::Multi,
        }
    }
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Head::Binary => "binary",
            Head::Multi => "multi",
        })
    }
}

/// How the input vector is laid out before the convolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Features form the sequence: `L = W`, one channel.
    #[default]
    Features,
    /// A single time step with `W` channels; the convolution has width 1 and
    /// there is no pooling.
    Channels,
}

impl std::str::FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "features" => Ok(Axis::Features),
            "channels" => Ok(Axis::Channels),
            other => Err(format!("unknown axis `{other}` (features|channels)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_width: usize,
    pub conv_filters: usize,
    pub conv_kernel: usize,
    pub pool_width: usize,
    pub lstm_hidden: usize,
    pub dense_units: usize,
    pub dropout_rate: f64,
    pub head: Head,
    #[serde(default)]
    pub axis: Axis,
}

impl ArchitectureSpec {
    pub fn new(head: Head) -> Self {
        Self {
            input_width: 20,
            conv_filters: 32,
            conv_kernel: 3,
            pool_width: 2,
            lstm_hidden: 32,
            dense_units: 64,
            dropout_rate: 0.3,
            head,
            axis: Axis::Features,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(IdsError::InvalidSpec(m));
        for (name, v) in [
            ("input_width", self.input_width),
            ("conv_filters", self.conv_filters),
            ("conv_kernel", self.conv_kernel),
            ("lstm_hidden", self.lstm_hidden),
            ("dense_units", self.dense_units),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.conv_kernel % 2 == 0 {
            return bad(format!("conv_kernel must be odd, got {}", self.conv_kernel));
        }
        if self.pool_width != 2 {
            return bad(format!("only pool_width 2 is supported, got {}", self.pool_width));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.axis == Axis::Features && self.input_width < 2 {
            return bad("pooling needs at least 2 input features".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdsModel {
    spec: ArchitectureSpec,
    net: Network<f32>,
}

impl IdsModel {
    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network<f32> {
        &mut self.net
    }

    pub fn head(&self) -> Head {
        self.spec.head
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    /// Fails unless the model head answers `task`.
    pub fn expect_task(&self, task: LabelView) -> Result<()> {
        if Head::from(task) != self.spec.head {
            return Err(IdsError::HeadMismatch {
                model: self.spec.head,
                task,
            });
        }
        Ok(())
    }

    fn check_width(&self, frame: &FeatureFrame) -> Result<()> {
        if frame.n_features() != self.spec.input_width {
            return Err(IdsError::WidthMismatch {
                expected: self.spec.input_width,
                got: frame.n_features(),
            });
        }
        Ok(())
    }
}

/// Builds the layer stack with seeded Glorot-uniform weights, zero biases and
/// forget-gate biases of 1.
pub fn build_model(spec: &ArchitectureSpec, seed: u64) -> Result<IdsModel> {
    spec.validate()?;
    let mut rng = rng_stream(seed, 0);
    let w = spec.input_width;
    let f = spec.conv_filters;
    let h = spec.lstm_hidden;
    let (seq_shape, kernel, cin) = match spec.axis {
        Axis::Features => (vec![w, 1], spec.conv_kernel, 1),
        Axis::Channels => (vec![1, w], 1, w),
    };
    let lstm = |rng: &mut dyn rand::RngCore| {
        let mut b = vec![0.0f32; 4 * h];
        b[h..2 * h].fill(1.0);
        LstmCellParams {
            w: glorot_uniform(&[4 * h, f], f, 4 * h, rng),
            u: glorot_uniform(&[4 * h, h], h, 4 * h, rng),
            b: Tensor::from_vec(&[4 * h], b).expect("bias length"),
        }
    };
    let mut net = Network::new();
    net.push("reshape", Layer::Reshape(seq_shape));
    net.push(
        "conv",
        Layer::Conv1d {
            kernels: glorot_uniform(&[kernel, cin, f], kernel * cin, kernel * f, &mut rng),
            bias: Tensor::zeros(&[f]),
        },
    );
    net.push("conv_relu", Layer::Relu);
    if spec.axis == Axis::Features {
        net.push("pool", Layer::MaxPool1d);
    }
    let fwd = lstm(&mut rng);
    let bwd = lstm(&mut rng);
    net.push("bilstm", Layer::BiLstm { fwd, bwd });
    net.push("summary", Layer::BiLstmSummary);
    net.push(
        "dense",
        Layer::Dense {
            weight: glorot_uniform(&[2 * h, spec.dense_units], 2 * h, spec.dense_units, &mut rng),
            bias: Tensor::zeros(&[spec.dense_units]),
        },
    );
    net.push("dense_relu", Layer::Relu);
    net.push("dropout", Layer::Dropout(spec.dropout_rate));
    let out = spec.head.outputs();
    net.push(
        "head",
        Layer::Dense {
            weight: glorot_uniform(&[spec.dense_units, out], spec.dense_units, out, &mut rng),
            bias: Tensor::zeros(&[out]),
        },
    );
    let model = IdsModel {
        spec: spec.clone(),
        net,
    };
    log::debug!("built {} model with {} parameters", spec.head, model.param_count());
    Ok(model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: LabelView,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub use_class_weights: bool,
    /// Share of the training rows held out for per-epoch validation.
    pub validation_fraction: f64,
}

impl TrainConfig {
    pub fn binary() -> Self {
        Self {
            task: LabelView::Binary,
            lr: 0.001,
            epochs: 15,
            batch_size: 256,
            seed: 0,
            use_class_weights: false,
            validation_fraction: 0.0,
        }
    }

    pub fn multi() -> Self {
        Self {
            task: LabelView::Multi,
            lr: 0.01,
            epochs: 30,
            batch_size: 128,
            seed: 0,
            use_class_weights: true,
            validation_fraction: 0.0,
        }
    }

    pub fn for_task(task: LabelView) -> Self {
        match task {
            LabelView::Binary => Self::binary(),
            LabelView::Multi => Self::multi(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(IdsError::InvalidConfig(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!(
                "validation_fraction {} outside [0, 1)",
                self.validation_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub trace: Vec<EpochStats>,
    pub train_time_s: f64,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<f64> {
        self.trace.last().map(|e| e.loss)
    }

    /// `epoch,loss,accuracy,val_loss,val_accuracy`, empty cells when there is
    /// no validation split.
    pub fn trace_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("epoch,loss,accuracy,val_loss,val_accuracy\n");
        for e in &self.trace {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch,
                e.loss,
                e.accuracy,
                opt(e.val_loss),
                opt(e.val_accuracy)
            ));
        }
        out
    }
}

fn batch_input(frame: &FeatureFrame, rows: &[usize]) -> Tensor<f32> {
    let w = frame.n_features();
    let mut data = Vec::with_capacity(rows.len() * w);
    for &r in rows {
        data.extend_from_slice(frame.row(r));
    }
    Tensor::from_vec(&[rows.len(), w], data).expect("batch shape")
}

fn predicted_labels(probs: &Tensor<f32>) -> Vec<u8> {
    let width = probs.shape()[1];
    if width == 1 {
        probs.data().iter().map(|&p| u8::from(p >= 0.5)).collect()
    } else {
        probs
            .data()
            .chunks(width)
            .map(|row| {
                let mut best = 0;
                for (j, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = j;
                    }
                }
                best as u8
            })
            .collect()
    }
}

/// Mini-batch Adam on weighted cross-entropy. Rows are reshuffled every epoch
/// from the run seed; identical inputs give bitwise-identical parameters.
pub fn train(model: &mut IdsModel, frame: &FeatureFrame, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.expect_task(cfg.task)?;
    model.check_width(frame)?;
    if frame.n_rows() == 0 {
        return Err(IdsError::EmptyFrame);
    }
    let start = Instant::now();
    let labels = frame.labels(cfg.task);
    let n_classes = cfg.task.n_classes();

    let mut rows: Vec<usize> = (0..frame.n_rows()).collect();
    let mut val_rows = Vec::new();
    if cfg.validation_fraction > 0.0 {
        rows.shuffle(&mut rng_stream(cfg.seed, 3));
        let n_val = ((rows.len() as f64) * cfg.validation_fraction).round() as usize;
        val_rows = rows.drain(..n_val.min(rows.len() - 1)).collect();
        val_rows.sort_unstable();
        rows.sort_unstable();
    }

    let train_labels: Vec<u8> = rows.iter().map(|&r| labels[r]).collect();
    let weights: Vec<f32> = if cfg.use_class_weights {
        class_weights_for(&train_labels, n_classes)?
            .into_iter()
            .map(|w| w as f32)
            .collect()
    } else {
        vec![1.0; n_classes]
    };

    let mut shuffle_rng = rng_stream(cfg.seed, 1);
    let mut dropout_rng = rng_stream(cfg.seed, 2);
    let mut adam = AdamState::new(cfg.lr);
    let mut tape = GradientTape::new();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        rows.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for batch in rows.chunks(cfg.batch_size) {
            let x = batch_input(frame, batch);
            let target: Vec<usize> = batch.iter().map(|&r| labels[r] as usize).collect();
            let logits = model
                .net
                .forward_recorded(&x, Mode::Train(&mut dropout_rng), &mut tape)?;
            let out = weighted_cross_entropy_with_logits(&logits, &target, &weights)?;
            let (grads, _) = model.net.backward(&tape, &out.dlogits)?;
            adam_step(&mut model.net.params_mut(), &grads, &mut adam)?;
            loss_sum += out.loss as f64 * batch.len() as f64;
            correct += predicted_labels(&out.probs)
                .iter()
                .zip(&target)
                .filter(|(p, &t)| **p as usize == t)
                .count();
        }
        let (val_loss, val_accuracy) = if val_rows.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate_rows(model, frame, &val_rows, labels, &weights)?;
            (Some(l), Some(a))
        };
        let stats = EpochStats {
            epoch,
            loss: loss_sum / rows.len() as f64,
            accuracy: correct as f64 / rows.len() as f64,
            val_loss,
            val_accuracy,
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.5} accuracy {:.4}",
            cfg.epochs,
            stats.loss,
            stats.accuracy
        );
        trace.push(stats);
    }
    Ok(TrainOutcome {
        trace,
        train_time_s: start.elapsed().as_secs_f64(),
    })
}

fn evaluate_rows(
    model: &IdsModel,
    frame: &FeatureFrame,
    rows: &[usize],
    labels: &[u8],
    weights: &[f32],
) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0;
    for chunk in rows.chunks(PREDICT_CHUNK) {
        let x = batch_input(frame, chunk);
        let target: Vec<usize> = chunk.iter().map(|&r| labels[r] as usize).collect();
        let logits = model.net.forward(&x, Mode::Inference)?;
        let out = weighted_cross_entropy_with_logits(&logits, &target, weights)?;
        loss += out.loss as f64 * chunk.len() as f64;
        correct += predicted_labels(&out.probs)
            .iter()
            .zip(&target)
            .filter(|(p, &t)| **p as usize == t)
            .count();
    }
    Ok((loss / rows.len() as f64, correct as f64 / rows.len() as f64))
}

/// Rows per inference batch; bounds memory on large frames.
pub const PREDICT_CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// `n×1` attack probabilities or `n×10` class probabilities.
    pub probs: Tensor<f32>,
    pub seconds: f64,
}

impl Prediction {
    /// Threshold 0.5 for a sigmoid head, otherwise argmax (lowest id on ties).
    pub fn labels(&self) -> Vec<u8> {
        predicted_labels(&self.probs)
    }
}

/// Head probabilities for `x` (`n×W`), inference mode.
pub fn probabilities(model: &IdsModel, x: &Tensor<f32>) -> Result<Tensor<f32>> {
    let logits = model.net.forward(x, Mode::Inference)?;
    Ok(match model.spec.head {
        Head::Binary => sigmoid(&logits),
        Head::Multi => softmax(&logits),
    })
}

/// Pure inference over every row. Chunks may run on several threads and are
/// merged in row order; the timing covers the whole pass.
pub fn predict(model: &IdsModel, frame: &FeatureFrame) -> Result<Prediction> {
    model.check_width(frame)?;
    if frame.n_rows() == 0 {
        return Err(IdsError::EmptyFrame);
    }
    let out = model.spec.head.outputs();
    let n = frame.n_rows();
    let start = Instant::now();
    let chunks: Vec<Vec<usize>> = (0..n)
        .collect::<Vec<_>>()
        .chunks(PREDICT_CHUNK)
        .map(<[usize]>::to_vec)
        .collect();
    let parts: Vec<Tensor<f32>> = chunks
        .par_iter()
        .map(|rows| probabilities(model, &batch_input(frame, rows)))
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(n * out);
    for p in parts {
        data.extend(p.into_vec());
    }
    let probs = Tensor::from_vec(&[n, out], data).map_err(IdsError::from)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(Prediction { probs, seconds })
}

#[cfg(test)]
mod tests;
