//! Finite-difference checks of every layer type in isolation, in 64-bit mode.

use eids::autonet::gradcheck::{check_gradients, linear_probe};
use eids::autonet::{glorot_uniform, Layer, Network, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::{rand_cell, rand_tensor};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn assert_net(net: &Network<f64>, x: &Tensor<f64>, out_shape: &[usize], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let probe = linear_probe(rand_tensor(&mut rng, out_shape));
    let report = check_gradients(net, x, &probe, STEP, None, seed).unwrap();
    for (name, err) in &report.entries {
        assert!(*err < TOL, "{name}: relative error {err:e}");
    }
}

#[test]
fn dense_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = Network::new().with(
        "dense",
        Layer::Dense {
            weight: rand_tensor(&mut rng, &[5, 3]),
            bias: rand_tensor(&mut rng, &[3]),
        },
    );
    assert_net(&net, &rand_tensor(&mut rng, &[4, 5]), &[4, 3], 1);
}

#[test]
fn conv1d_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = Network::new().with(
        "conv",
        Layer::Conv1d {
            kernels: rand_tensor(&mut rng, &[3, 2, 4]),
            bias: rand_tensor(&mut rng, &[4]),
        },
    );
    assert_net(&net, &rand_tensor(&mut rng, &[3, 7, 2]), &[3, 7, 4], 2);
}

#[test]
fn conv_relu_maxpool_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Network::new()
        .with(
            "conv",
            Layer::Conv1d {
                kernels: rand_tensor(&mut rng, &[3, 1, 4]),
                bias: rand_tensor(&mut rng, &[4]),
            },
        )
        .with("relu", Layer::Relu)
        .with("pool", Layer::MaxPool1d);
    assert_net(&net, &rand_tensor(&mut rng, &[2, 9, 1]), &[2, 4, 4], 3);
}

#[test]
fn lstm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = Network::new().with("lstm", Layer::Lstm(rand_cell(&mut rng, 3, 4)));
    assert_net(&net, &rand_tensor(&mut rng, &[2, 5, 3]), &[2, 5, 4], 4);
}

#[test]
fn lstm_single_step_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Network::new().with("lstm", Layer::Lstm(rand_cell(&mut rng, 2, 3)));
    assert_net(&net, &rand_tensor(&mut rng, &[3, 1, 2]), &[3, 1, 3], 5);
}

#[test]
fn bilstm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let net = Network::new().with(
        "bilstm",
        Layer::BiLstm {
            fwd: rand_cell(&mut rng, 3, 4),
            bwd: rand_cell(&mut rng, 3, 4),
        },
    );
    assert_net(&net, &rand_tensor(&mut rng, &[2, 6, 3]), &[2, 6, 8], 6);
}

#[test]
fn bilstm_summary_dense_dropout_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = Network::new()
        .with(
            "bilstm",
            Layer::BiLstm {
                fwd: rand_cell(&mut rng, 2, 3),
                bwd: rand_cell(&mut rng, 2, 3),
            },
        )
        .with("summary", Layer::BiLstmSummary)
        .with(
            "dense",
            Layer::Dense {
                weight: glorot_uniform(&[6, 5], 6, 5, &mut rng),
                bias: rand_tensor(&mut rng, &[5]),
            },
        )
        .with("drop", Layer::Dropout(0.3));
    assert_net(&net, &rand_tensor(&mut rng, &[3, 4, 2]), &[3, 5], 7);
}

#[test]
fn reshape_and_last_step_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let net = Network::new()
        .with("reshape", Layer::Reshape(vec![4, 2]))
        .with("lstm", Layer::Lstm(rand_cell(&mut rng, 2, 3)))
        .with("last", Layer::LastStep);
    assert_net(&net, &rand_tensor(&mut rng, &[2, 8]), &[2, 3], 8);
}

#[test]
fn default_model_end_to_end_gradients() {
    use eids::autonet::weighted_cross_entropy_with_logits;
    use eids::idsmodel::{build_model, ArchitectureSpec, Head};
    use rand::Rng;

    let net = build_model(&ArchitectureSpec::new(Head::Multi), 12)
        .unwrap()
        .network()
        .cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = (0..)
        .map(|_| Tensor::from_vec(&[4, 20], (0..80).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap())
        .find(|x| common::kink_margin(&net, x) >= 10.0 * STEP)
        .unwrap();
    let target = vec![1usize, 0, 6, 9];
    let weights = vec![1.0; 10];
    let objective = move |y: &Tensor<f64>| {
        let out = weighted_cross_entropy_with_logits(y, &target, &weights)?;
        Ok((out.loss, out.dlogits))
    };
    let report = check_gradients(&net, &x, &objective, STEP, Some(24), 12).unwrap();
    for (name, err) in &report.entries {
        assert!(*err < TOL, "{name}: relative error {err:e}");
    }
}
