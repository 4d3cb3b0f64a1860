//! Classical comparators sharing the model's preprocessing: logistic
//! regression (sigmoid or softmax) and brute-force k-nearest-neighbours.

use std::collections::BinaryHeap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autonet::{
    adam_step, weighted_cross_entropy_with_logits, AdamState, AutonetError, GradientTape, Layer,
    Mode, Network, Tensor,
};
use crate::data::{FeatureFrame, LabelView};
use crate::rng_stream;

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("frame has no rows")]
    EmptyFrame,
    #[error("k = {k} must lie in 1..={n_train}")]
    InvalidK { k: usize, n_train: usize },
    #[error("frame has {got} features but the model was fitted on {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Autonet(#[from] AutonetError),
}

pub type Result<T, E = BaselineError> = std::result::Result<T, E>;

/// Predicted labels and the wall-clock seconds spent producing them.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselinePrediction {
    pub labels: Vec<u8>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub task: LabelView,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl LogisticConfig {
    pub fn new(task: LabelView) -> Self {
        Self {
            task,
            lr: 0.01,
            epochs: 50,
            batch_size: 512,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    /// `d×1` for the binary task, `d×C` otherwise.
    pub weight: Tensor<f32>,
    pub bias: Tensor<f32>,
    pub trained: bool,
    pub config: LogisticConfig,
}

impl LogisticModel {
    fn network(&self) -> Network<f32> {
        Network::new().with(
            "linear",
            Layer::Dense {
                weight: self.weight.clone(),
                bias: self.bias.clone(),
            },
        )
    }

    pub fn logits(&self, frame: &FeatureFrame) -> Result<Tensor<f32>> {
        let d = self.weight.shape()[0];
        if frame.n_features() != d {
            return Err(BaselineError::WidthMismatch {
                expected: d,
                got: frame.n_features(),
            });
        }
        if frame.n_rows() == 0 {
            return Err(BaselineError::EmptyFrame);
        }
        let x = Tensor::from_vec(&[frame.n_rows(), d], frame.matrix().to_vec())?;
        Ok(self.network().forward(&x, Mode::Inference)?)
    }
}

/// Labels from logits: positive logit (probability ≥ 0.5) for one column,
/// argmax with lowest index on ties otherwise.
pub fn logits_to_labels(logits: &Tensor<f32>) -> Vec<u8> {
    let w = logits.shape()[1];
    if w == 1 {
        return logits.data().iter().map(|&z| u8::from(z >= 0.0)).collect();
    }
    logits
        .data()
        .chunks(w)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best as u8
        })
        .collect()
}

/// Zero-initialized weights trained by mini-batch Adam on cross-entropy.
pub fn logistic_train(frame: &FeatureFrame, cfg: &LogisticConfig) -> Result<LogisticModel> {
    if frame.n_rows() == 0 {
        return Err(BaselineError::EmptyFrame);
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(BaselineError::InvalidConfig(
            "batch_size and lr must be positive".into(),
        ));
    }
    let d = frame.n_features();
    let out = match cfg.task {
        LabelView::Binary => 1,
        LabelView::Multi => cfg.task.n_classes(),
    };
    let mut net = Network::new().with(
        "linear",
        Layer::Dense {
            weight: Tensor::zeros(&[d, out]),
            bias: Tensor::zeros(&[out]),
        },
    );
    let labels = frame.labels(cfg.task);
    let weights = vec![1.0f32; cfg.task.n_classes()];
    let mut rows: Vec<usize> = (0..frame.n_rows()).collect();
    let mut rng = rng_stream(cfg.seed, 1);
    let mut adam = AdamState::new(cfg.lr);
    let mut tape = GradientTape::new();
    for epoch in 1..=cfg.epochs {
        rows.shuffle(&mut rng);
        let mut loss = 0.0;
        for batch in rows.chunks(cfg.batch_size) {
            let mut data = Vec::with_capacity(batch.len() * d);
            for &r in batch {
                data.extend_from_slice(frame.row(r));
            }
            let x = Tensor::from_vec(&[batch.len(), d], data)?;
            let target: Vec<usize> = batch.iter().map(|&r| labels[r] as usize).collect();
            let logits = net.forward_recorded(&x, Mode::Inference, &mut tape)?;
            let l = weighted_cross_entropy_with_logits(&logits, &target, &weights)?;
            let (grads, _) = net.backward(&tape, &l.dlogits)?;
            adam_step(&mut net.params_mut(), &grads, &mut adam)?;
            loss += l.loss as f64 * batch.len() as f64;
        }
        log::debug!("logistic epoch {epoch}: loss {:.5}", loss / rows.len() as f64);
    }
    let mut params = net.params().into_iter().map(|(_, t)| t.clone());
    Ok(LogisticModel {
        weight: params.next().expect("weight"),
        bias: params.next().expect("bias"),
        trained: cfg.epochs > 0,
        config: cfg.clone(),
    })
}

pub fn logistic_predict(model: &LogisticModel, frame: &FeatureFrame) -> Result<BaselinePrediction> {
    let start = Instant::now();
    let logits = model.logits(frame)?;
    let labels = logits_to_labels(&logits);
    Ok(BaselinePrediction {
        labels,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnnModel {
    matrix: Vec<f32>,
    labels: Vec<u8>,
    width: usize,
    n_classes: usize,
    pub k: usize,
}

impl KnnModel {
    pub fn n_train(&self) -> usize {
        self.labels.len()
    }
}

/// Stores the training rows; there is no index.
pub fn knn_fit(frame: &FeatureFrame, view: LabelView, k: usize) -> Result<KnnModel> {
    if frame.n_rows() == 0 {
        return Err(BaselineError::EmptyFrame);
    }
    if k == 0 || k > frame.n_rows() {
        return Err(BaselineError::InvalidK {
            k,
            n_train: frame.n_rows(),
        });
    }
    Ok(KnnModel {
        matrix: frame.matrix().to_vec(),
        labels: frame.labels(view).to_vec(),
        width: frame.n_features(),
        n_classes: view.n_classes(),
        k,
    })
}

#[derive(PartialEq)]
struct Neighbour {
    dist: f32,
    index: usize,
}

impl Eq for Neighbour {}

impl PartialOrd for Neighbour {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbour {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

fn knn_query(model: &KnnModel, q: &[f32]) -> u8 {
    // Max-heap of the k best so far; equal distances prefer the lower index.
    let mut heap = BinaryHeap::with_capacity(model.k + 1);
    for (index, row) in model.matrix.chunks_exact(model.width).enumerate() {
        let dist: f32 = row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        let cand = Neighbour { dist, index };
        if heap.len() < model.k {
            heap.push(cand);
        } else if cand < *heap.peek().expect("non-empty") {
            heap.pop();
            heap.push(cand);
        }
    }
    let mut votes = vec![0usize; model.n_classes];
    for n in heap {
        votes[model.labels[n.index] as usize] += 1;
    }
    let mut best = 0;
    for (c, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = c;
        }
    }
    best as u8
}

/// Majority vote over the `k` nearest training rows by Euclidean distance;
/// vote ties go to the smallest class id. Queries run in parallel and are
/// returned in row order.
pub fn knn_predict(model: &KnnModel, frame: &FeatureFrame) -> Result<BaselinePrediction> {
    if frame.n_features() != model.width {
        return Err(BaselineError::WidthMismatch {
            expected: model.width,
            got: frame.n_features(),
        });
    }
    let start = Instant::now();
    let labels = frame
        .matrix()
        .par_chunks_exact(model.width)
        .map(|q| knn_query(model, q))
        .collect();
    Ok(BaselinePrediction {
        labels,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    fn frame(points: &[[f32; 2]], labels: &[u8]) -> FeatureFrame {
        FeatureFrame::new(
            vec!["x".into(), "y".into()],
            points.iter().flatten().copied().collect(),
            labels.to_vec(),
            labels.iter().map(|&l| l * 3).collect(),
            Split::Train,
        )
        .unwrap()
    }

    fn separable() -> FeatureFrame {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            let t = i as f32 / 30.0;
            pts.push([t, (t + 0.2).min(1.0)]);
            labels.push(1);
            pts.push([(t + 0.2).min(1.0), t]);
            labels.push(0);
        }
        frame(&pts, &labels)
    }

    #[test]
    fn logistic_learns_separable_fixture() {
        let f = separable();
        let cfg = LogisticConfig {
            epochs: 300,
            batch_size: 16,
            lr: 0.05,
            ..LogisticConfig::new(LabelView::Binary)
        };
        let m = logistic_train(&f, &cfg).unwrap();
        assert_eq!(logistic_predict(&m, &f).unwrap().labels, f.binary_labels());
    }

    #[test]
    fn logistic_zero_epochs_is_untrained() {
        let f = separable();
        for view in [LabelView::Binary, LabelView::Multi] {
            let cfg = LogisticConfig {
                epochs: 0,
                ..LogisticConfig::new(view)
            };
            let m = logistic_train(&f, &cfg).unwrap();
            assert!(!m.trained);
            assert!(m.weight.data().iter().all(|&w| w == 0.0));
            let z = m.logits(&f).unwrap();
            assert!(z.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn logistic_is_deterministic() {
        let f = separable();
        let cfg = LogisticConfig {
            epochs: 5,
            batch_size: 8,
            seed: 4,
            ..LogisticConfig::new(LabelView::Multi)
        };
        assert_eq!(logistic_train(&f, &cfg).unwrap(), logistic_train(&f, &cfg).unwrap());
    }

    #[test]
    fn knn_k1_recovers_training_point() {
        let f = frame(&[[0.0, 0.0], [1.0, 1.0], [0.2, 0.9]], &[0, 1, 1]);
        let m = knn_fit(&f, LabelView::Binary, 1).unwrap();
        assert_eq!(knn_predict(&m, &f).unwrap().labels, vec![0, 1, 1]);
    }

    #[test]
    fn knn_k_equals_n_is_global_majority() {
        let f = frame(&[[0.0, 0.0], [1.0, 1.0], [0.2, 0.9], [0.1, 0.1]], &[0, 1, 1, 1]);
        let m = knn_fit(&f, LabelView::Binary, 4).unwrap();
        assert_eq!(knn_predict(&m, &f).unwrap().labels, vec![1; 4]);
    }

    #[test]
    fn knn_four_point_vote() {
        // Distances² from (0.4, 0): 0.16, 0.36, 0.4, 1.16 → neighbours A0, B1, C1.
        let train = frame(&[[0.0, 0.0], [1.0, 0.0], [0.6, 0.6], [0.0, 1.0]], &[0, 1, 1, 0]);
        let m = knn_fit(&train, LabelView::Binary, 3).unwrap();
        let q = frame(&[[0.4, 0.0]], &[0]);
        assert_eq!(knn_predict(&m, &q).unwrap().labels, vec![1]);
        // k = 2 ties one vote each; the smaller class wins.
        let m = knn_fit(&train, LabelView::Binary, 2).unwrap();
        assert_eq!(knn_predict(&m, &q).unwrap().labels, vec![0]);
    }

    #[test]
    fn knn_rejects_bad_k_and_empty() {
        let f = frame(&[[0.0, 0.0]], &[0]);
        assert!(matches!(knn_fit(&f, LabelView::Binary, 0), Err(BaselineError::InvalidK { .. })));
        assert!(matches!(knn_fit(&f, LabelView::Binary, 2), Err(BaselineError::InvalidK { .. })));
        let empty = FeatureFrame::new(vec!["x".into()], vec![], vec![], vec![], Split::Train).unwrap();
        assert!(matches!(knn_fit(&empty, LabelView::Binary, 1), Err(BaselineError::EmptyFrame)));
        assert!(matches!(
            logistic_train(&empty, &LogisticConfig::new(LabelView::Binary)),
            Err(BaselineError::EmptyFrame)
        ));
    }
}
