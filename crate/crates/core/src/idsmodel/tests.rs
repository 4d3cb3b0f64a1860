use super::*;
use crate::data::Split;
use crate::chisel::SelectionMask;
use crate::data::EncoderState;
use rand::{Rng, SeedableRng};

fn random_frame(rows: usize, width: usize, seed: u64) -> FeatureFrame {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let matrix = (0..rows * width).map(|_| rng.gen::<f32>()).collect();
    let classes: Vec<u8> = (0..rows).map(|_| rng.gen_range(0..10)).collect();
    let binary = classes.iter().map(|&c| u8::from(c != 0)).collect();
    let names = (0..width).map(|j| format!("f{j}")).collect();
    FeatureFrame::new(names, matrix, binary, classes, Split::Train).unwrap()
}

/// Two informative features, zero-padded to 20 columns; the class is decided
/// by which feature is larger.
fn separable_frame() -> FeatureFrame {
    let mut matrix = Vec::new();
    let mut binary = Vec::new();
    for i in 0..20 {
        let a = (i % 10) as f32 / 10.0;
        let attack = i % 2 == 1;
        let (x0, x1) = if attack { (0.05 + a * 0.1, 0.9 - a * 0.1) } else { (0.9 - a * 0.1, 0.05 + a * 0.1) };
        let mut row = vec![0.0f32; 20];
        row[0] = x0;
        row[1] = x1;
        matrix.extend(row);
        binary.push(u8::from(attack));
    }
    let classes = binary.iter().map(|&b| b * 4).collect();
    let names = (0..20).map(|j| format!("f{j}")).collect();
    FeatureFrame::new(names, matrix, binary, classes, Split::Train).unwrap()
}

fn mask(width: usize) -> SelectionMask {
    SelectionMask::new((0..width).map(|j| (j, format!("f{j}"))).collect()).unwrap()
}

#[test]
fn default_parameter_budget() {
    for head in [Head::Binary, Head::Multi] {
        let m = build_model(&ArchitectureSpec::new(head), 1).unwrap();
        assert!(m.param_count() < 60_000, "{}", m.param_count());
    }
    // conv 128 + bilstm 2·8320 + dense 4160 + head 650
    let m = build_model(&ArchitectureSpec::new(Head::Multi), 1).unwrap();
    assert_eq!(m.param_count(), 21_578);
}

#[test]
fn forget_bias_starts_at_one() {
    let m = build_model(&ArchitectureSpec::new(Head::Binary), 3).unwrap();
    let params = m.network().params();
    let (_, b) = params.iter().find(|(n, _)| n == "bilstm.fwd.b").unwrap();
    let h = 32;
    assert!(b.data()[..h].iter().all(|&v| v == 0.0));
    assert!(b.data()[h..2 * h].iter().all(|&v| v == 1.0));
    assert!(b.data()[2 * h..].iter().all(|&v| v == 0.0));
}

#[test]
fn spec_validation() {
    let mut s = ArchitectureSpec::new(Head::Binary);
    s.dropout_rate = 1.0;
    assert!(build_model(&s, 0).is_err());
    let mut s = ArchitectureSpec::new(Head::Binary);
    s.conv_kernel = 4;
    assert!(build_model(&s, 0).is_err());
    let mut s = ArchitectureSpec::new(Head::Binary);
    s.lstm_hidden = 0;
    assert!(build_model(&s, 0).is_err());
}

#[test]
fn head_contracts() {
    let f = random_frame(7, 20, 2);
    let b = build_model(&ArchitectureSpec::new(Head::Binary), 5).unwrap();
    let p = predict(&b, &f).unwrap();
    assert_eq!(p.probs.shape(), &[7, 1]);
    assert!(p.probs.data().iter().all(|&v| v > 0.0 && v < 1.0));
    assert!(p.seconds > 0.0);
    let labels = p.labels();
    for (l, &v) in labels.iter().zip(p.probs.data()) {
        assert_eq!(*l, u8::from(v >= 0.5));
    }

    let m = build_model(&ArchitectureSpec::new(Head::Multi), 5).unwrap();
    let p = predict(&m, &f).unwrap();
    assert_eq!(p.probs.shape(), &[7, 10]);
    for row in p.probs.data().chunks(10) {
        assert!((row.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn channels_axis_builds_and_predicts() {
    let mut s = ArchitectureSpec::new(Head::Binary);
    s.axis = Axis::Channels;
    let m = build_model(&s, 1).unwrap();
    assert!(m.network().layers().all(|(n, _)| n != "pool"));
    let p = predict(&m, &random_frame(3, 20, 1)).unwrap();
    assert_eq!(p.probs.shape(), &[3, 1]);
}

#[test]
fn duplicated_rows_give_identical_outputs() {
    let f = random_frame(1, 20, 9);
    let twice = f.select_rows(&[0, 0]);
    let m = build_model(&ArchitectureSpec::new(Head::Multi), 2).unwrap();
    let p = predict(&m, &twice).unwrap();
    assert_eq!(p.probs.row(0), p.probs.row(1));
}

#[test]
fn width_and_task_mismatch() {
    let m = build_model(&ArchitectureSpec::new(Head::Binary), 0).unwrap();
    let narrow = random_frame(4, 5, 0);
    assert!(matches!(predict(&m, &narrow), Err(IdsError::WidthMismatch { expected: 20, got: 5 })));
    let mut m2 = m.clone();
    let f = random_frame(4, 20, 0);
    assert!(matches!(
        train(&mut m2, &f, &TrainConfig::multi()),
        Err(IdsError::HeadMismatch { .. })
    ));
    assert!(matches!(
        train(&mut m2, &narrow, &TrainConfig::binary()),
        Err(IdsError::WidthMismatch { .. })
    ));
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let f = random_frame(16, 20, 4);
    let mut m = build_model(&ArchitectureSpec::new(Head::Binary), 4).unwrap();
    let before = m.clone();
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::binary()
    };
    let out = train(&mut m, &f, &cfg).unwrap();
    assert!(out.trace.is_empty());
    assert_eq!(m, before);
}

#[test]
fn separable_fixture_is_learned() {
    let f = separable_frame();
    let mut m = build_model(&ArchitectureSpec::new(Head::Binary), 11).unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 20,
        lr: 0.01,
        seed: 11,
        ..TrainConfig::binary()
    };
    train(&mut m, &f, &cfg).unwrap();
    let pred = predict(&m, &f).unwrap().labels();
    assert_eq!(pred, f.binary_labels());
}

#[test]
fn training_is_deterministic() {
    let f = random_frame(40, 20, 8);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 16,
        seed: 21,
        validation_fraction: 0.25,
        ..TrainConfig::multi()
    };
    let run = || {
        let mut m = build_model(&ArchitectureSpec::new(Head::Multi), 21).unwrap();
        let out = train(&mut m, &f, &cfg).unwrap();
        (m, out.trace)
    };
    let (m1, t1) = run();
    let (m2, t2) = run();
    assert_eq!(m1, m2);
    let bits = |t: &[EpochStats]| t.iter().map(|e| e.loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&t1), bits(&t2));
    assert!(t1.iter().all(|e| e.val_loss.is_some()));
    assert_eq!(t1.len(), 3);
}

fn checkpoint(model: IdsModel) -> ModelCheckpoint {
    ModelCheckpoint {
        model,
        mask: mask(20),
        encoder_digest: Some("ab".repeat(32)),
        metadata: TrainingMetadata {
            seed: 3,
            epochs_run: 1,
            final_loss: Some(0.25),
            train_config: Some(TrainConfig::binary()),
        },
    }
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let m = build_model(&ArchitectureSpec::new(Head::Binary), 6).unwrap();
    let c = checkpoint(m);
    let bytes = encode_checkpoint(&c);
    let back = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back, c);
    assert_eq!(encode_checkpoint(&back), bytes);
    let f = random_frame(9, 20, 6);
    let a = predict(&c.model, &f).unwrap().probs;
    let b = predict(&back.model, &f).unwrap().probs;
    let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn corrupted_checkpoint_fails_checksum() {
    let c = checkpoint(build_model(&ArchitectureSpec::new(Head::Binary), 6).unwrap());
    let mut bytes = encode_checkpoint(&c);
    let n = bytes.len();
    bytes[n - 100] ^= 0x01;
    assert!(matches!(decode_checkpoint(&bytes), Err(IdsError::Checksum)));
    assert!(matches!(decode_checkpoint(&bytes[..n - 10]), Err(IdsError::Checksum)));
    let mut bad = encode_checkpoint(&c);
    bad[1] = b'X';
    assert!(matches!(decode_checkpoint(&bad), Err(IdsError::BadMagic)));
}

#[test]
fn checkpoint_version_checked() {
    let c = checkpoint(build_model(&ArchitectureSpec::new(Head::Binary), 6).unwrap());
    let mut bytes = encode_checkpoint(&c);
    bytes[4] = 2;
    let n = bytes.len();
    let crc = crc32fast::hash(&bytes[..n - 4]);
    bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
    assert!(matches!(decode_checkpoint(&bytes), Err(IdsError::UnsupportedVersion(2))));
}

#[test]
fn multi_checkpoint_refuses_binary_task() {
    let c = checkpoint(build_model(&ArchitectureSpec::new(Head::Multi), 6).unwrap());
    let back = decode_checkpoint(&encode_checkpoint(&c)).unwrap();
    assert!(matches!(
        back.model.expect_task(LabelView::Binary),
        Err(IdsError::HeadMismatch { model: Head::Multi, task: LabelView::Binary })
    ));
}

#[test]
fn checkpoint_file_io() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.eidm");
    let c = checkpoint(build_model(&ArchitectureSpec::new(Head::Binary), 6).unwrap());
    save_checkpoint(&c, &p).unwrap();
    assert_eq!(load_checkpoint(&p).unwrap(), c);
    assert!(matches!(load_checkpoint(&dir.path().join("nope")), Err(IdsError::Io { .. })));
}

#[test]
fn encoder_digest_is_hex_sha256() {
    let enc = EncoderState {
        vocabularies: vec![],
        ranges: vec![],
    };
    let d = encoder_digest(&enc);
    assert_eq!(d.len(), 64);
    assert_eq!(d, encoder_digest(&enc.clone()));
}
