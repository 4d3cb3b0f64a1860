//! Fixtures and oracles shared by the integration tests.
#![allow(dead_code)]

use eids::autonet::{LstmCellParams, Tensor};
use eids::data::{FeatureFrame, LabelView, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rand_cell(rng: &mut ChaCha8Rng, d: usize, h: usize) -> LstmCellParams<f64> {
    LstmCellParams::new(
        rand_tensor(rng, &[4 * h, d]),
        rand_tensor(rng, &[4 * h, h]),
        rand_tensor(rng, &[4 * h]),
    )
    .unwrap()
}

/// Up to 40 rows and 5 columns. Cells lie on a 2^-24 grid (how `rand` draws
/// `f32`), so column sums in f64 are exact and independent of row order.
pub fn random_frame(rng: &mut ChaCha8Rng) -> FeatureFrame {
    let rows = rng.gen_range(1..40);
    let width = rng.gen_range(1..6);
    let matrix = (0..rows * width)
        .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f32>() })
        .collect();
    let classes: Vec<u8> = (0..rows).map(|_| rng.gen_range(0..10)).collect();
    let binary = classes.iter().map(|&c| u8::from(c != 0)).collect();
    let names = (0..width).map(|j| format!("c{j}")).collect();
    FeatureFrame::new(names, matrix, binary, classes, Split::Train).unwrap()
}

/// χ² via the one-hot contingency: observed = Yᵀ X, expected = class share ×
/// feature total.
pub fn chi2_oracle(frame: &FeatureFrame, view: LabelView) -> Vec<f64> {
    let c = view.n_classes();
    let n = frame.n_rows();
    let labels = frame.labels(view);
    let y: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| (0..c).map(|k| f64::from(u8::from(k == l as usize))).collect())
        .collect();
    (0..frame.n_features())
        .map(|j| {
            let x: Vec<f64> = frame.column(j).map(f64::from).collect();
            let total: f64 = x.iter().sum();
            let mut score = 0.0;
            for k in 0..c {
                let count: f64 = y.iter().map(|r| r[k]).sum();
                if count == 0.0 || total == 0.0 {
                    continue;
                }
                let observed: f64 = (0..n).map(|i| y[i][k] * x[i]).sum();
                let expected = total * count / n as f64;
                score += (observed - expected).powi(2) / expected;
            }
            score
        })
        .collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// Reverses the time axis of an `n×L×d` tensor.
pub fn reverse_time(x: &Tensor<f64>) -> Tensor<f64> {
    let [n, len, d] = x.dims::<3>("reverse_time").unwrap();
    let mut rev = x.clone();
    for b in 0..n {
        for t in 0..len {
            for k in 0..d {
                rev.data_mut()[(b * len + t) * d + k] = x.data()[(b * len + (len - 1 - t)) * d + k];
            }
        }
    }
    rev
}

/// Largest deviation from the reversal identity
/// `bilstm(rev x, P, Q)[t] == swap(bilstm(x, Q, P)[L-1-t])`.
pub fn reversal_gap(left: &Tensor<f64>, right: &Tensor<f64>, n: usize, len: usize, h: usize) -> f64 {
    let mut worst = 0.0f64;
    for b in 0..n {
        for t in 0..len {
            let l = &left.data()[(b * len + t) * 2 * h..][..2 * h];
            let r = &right.data()[(b * len + (len - 1 - t)) * 2 * h..][..2 * h];
            for k in 0..h {
                worst = worst.max((l[k] - r[h + k]).abs()).max((l[h + k] - r[k]).abs());
            }
        }
    }
    worst
}

/// Smallest distance of any ReLU input from 0 and of any max-pool window
/// from a tie, over a forward pass of `net` at `x`. Central differences are
/// only meaningful when this exceeds the step.
pub fn kink_margin(net: &eids::autonet::Network<f64>, x: &Tensor<f64>) -> f64 {
    use eids::autonet::{Layer, Mode, Network};
    let mut margin = f64::INFINITY;
    let mut prefix = Network::new();
    for (name, layer) in net.layers() {
        match layer {
            Layer::Relu => {
                let pre = prefix.forward(x, Mode::Inference).unwrap();
                margin = pre.data().iter().fold(margin, |m, v| m.min(v.abs()));
            }
            Layer::MaxPool1d => {
                let y = prefix.forward(x, Mode::Inference).unwrap();
                let [n, len, c] = y.dims::<3>("kink_margin").unwrap();
                for b in 0..n {
                    for w in 0..len / 2 {
                        for k in 0..c {
                            let a = y.data()[(b * len + 2 * w) * c + k];
                            let e = y.data()[(b * len + 2 * w + 1) * c + k];
                            // Two clamped zeros stay tied under small moves.
                            if a != 0.0 || e != 0.0 {
                                margin = margin.min((a - e).abs());
                            }
                        }
                    }
                }
            }
            _ => {}
        }
        prefix.push(name, layer.clone());
    }
    margin
}
