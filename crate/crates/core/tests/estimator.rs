use ccc_core::cfe::{CameraFingerprint, CfeEncoderConfig};
use ccc_core::dataio::{synthesize_dataset, SyntheticCamera};
use ccc_core::estimator::*;
use ccc_core::histogram::RawImage;
use ccc_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn oracle_config() -> ModelConfig {
    let enc = CfeEncoderConfig { input_bins: 32, widths: [2, 2, 3, 3], hidden: 8, out_dim: 8 };
    ModelConfig::reduced(16, [2, 3, 4, 4], enc)
}

fn tiny_config() -> ModelConfig {
    let enc = CfeEncoderConfig { input_bins: 32, widths: [2, 2, 2, 2], hidden: 4, out_dim: 8 };
    ModelConfig::reduced(16, [2, 2, 2, 2], enc)
}

fn training_set(model: &CcmModel, cams: &[SyntheticCamera]) -> TrainingSet {
    let mut set = TrainingSet::for_model(model);
    for c in cams {
        let i = set.add_camera(c.calibration.clone()).unwrap();
        for s in &c.scenes {
            set.add_image(&s.image, s.gt, i).unwrap();
        }
    }
    set
}

/// Values from an independent float64 torch implementation of the same
/// network, fed the same parameters and histograms.
#[test]
fn forward_pass_matches_reference_implementation() {
    let model = CcmModel::init(oracle_config(), 3).unwrap();
    let cam = ccc_core::dataio::synthesize_camera(0, 1, 77).unwrap();
    let fp = model.fingerprint(&cam.calibration).unwrap();
    let want_fp = [
        -0.6598676145723155,
        -0.5954728613799312,
        -1.9639163744958306,
        -0.468893504852659,
        0.5613710524794225,
        -0.08378356952038535,
        -0.9738747200026105,
        1.0935093285005353,
    ];
    for (a, b) in fp.values().iter().zip(want_fp) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    let est = estimate_illuminant(&cam.scenes[0].image, &cam.calibration, &model).unwrap();
    assert!((est.uv.u - -0.05420213194553819).abs() < 1e-10);
    assert!((est.uv.v - 0.0014289974905484504).abs() < 1e-10);
    let peak = est.heatmap.data.iter().cloned().fold(0.0, f64::max);
    assert!((peak - 0.004429045597012038).abs() < 1e-12);
}

fn flat_params(model: &CcmModel) -> Vec<(String, usize)> {
    model
        .params
        .iter()
        .flat_map(|(n, p)| (0..p.value.len()).map(move |i| (n.to_string(), i)))
        .collect()
}

#[test]
fn end_to_end_gradient_matches_finite_differences() {
    let mut model = CcmModel::init(tiny_config(), 5).unwrap();
    // Random biases and affine terms keep activations off the ReLU kink.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (name, p) in model.params.iter_mut() {
        if !name.ends_with(".w") {
            for v in p.value.data_mut() {
                *v += rng.gen_range(-0.2..0.2);
            }
        }
    }
    let cams = synthesize_dataset(2, 2, 8).unwrap();
    let set = training_set(&model, &cams);
    let idx = [0, 1, 3];
    model.params.clear_grads();
    batch_loss_and_grad(&mut model, &set, &idx).unwrap();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let h = 1e-6;
    for (name, i) in flat_params(&model) {
        let g = model.params.get(&name).unwrap().grad.as_ref().map_or(0.0, |g| g.data()[i]);
        analytic.push(g);
        let mut probe = model.clone();
        let orig = probe.params.get(&name).unwrap().value.data()[i];
        probe.params.get_mut(&name).unwrap().value.data_mut()[i] = orig + h;
        let up = batch_loss(&probe, &set, &idx).unwrap();
        probe.params.get_mut(&name).unwrap().value.data_mut()[i] = orig - h;
        let down = batch_loss(&probe, &set, &idx).unwrap();
        numeric.push((up - down) / (2.0 * h));
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    assert!(norm > 0.0);
    assert!(diff / norm < 1e-3, "relative error {}", diff / norm);
}

#[test]
fn zero_parameters_give_a_flat_heatmap() {
    let mut model = CcmModel::init(tiny_config(), 1).unwrap();
    for (_, p) in model.params.iter_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let cam = &synthesize_dataset(1, 1, 2).unwrap()[0];
    let fp = model.fingerprint(&cam.calibration).unwrap();
    assert!(fp.values().iter().all(|v| *v == 0.0));
    let (n0, n1) = query_histograms(&cam.scenes[0].image, &model.config.query).unwrap();
    let k = model.kernel(&n0, &n1, &fp).unwrap();
    for t in [&k.f0, &k.f1, &k.bias] {
        assert!(t.data().iter().all(|v| *v == 0.0));
    }
    let est = estimate_from_histograms(&model, &n0, &n1, &fp).unwrap();
    for p in &est.heatmap.data {
        assert!((p - 1.0 / 256.0).abs() < 1e-15);
    }
    assert!(est.uv.u.abs() < 1e-12 && est.uv.v.abs() < 1e-12);
}

#[test]
fn estimates_are_unit_vectors_from_distributions() {
    let model = CcmModel::init(tiny_config(), 2).unwrap();
    let cam = &synthesize_dataset(1, 3, 4).unwrap()[0];
    for s in &cam.scenes {
        let est = estimate_illuminant(&s.image, &cam.calibration, &model).unwrap();
        assert!((est.rgb.norm() - 1.0).abs() < 1e-12);
        assert!((est.heatmap.data.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(est.rgb_green_unit().g, 1.0);
    }
    let dark = RawImage::from_fn(4, 4, 1.0, |_, _| [0.0, 0.1, 0.1]).unwrap();
    assert!(matches!(estimate_illuminant(&dark, &cam.calibration, &model), Err(Error::Estimation(_))));
    let wrong = CameraFingerprint::zeros(3);
    assert!(estimate_with_fingerprint(&cam.scenes[0].image, &wrong, &model).is_err());
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let cams = synthesize_dataset(2, 8, 6).unwrap();
    let run = || {
        let mut model = CcmModel::init(tiny_config(), 4).unwrap();
        let set = training_set(&model, &cams);
        let cfg = TrainConfig { epochs: 6, batch_size: 4, lr: 3e-3, lr_decay_epoch: 3, seed: 7, ..Default::default() };
        let mut seen = Vec::new();
        let report = train(&mut model, &set, &cfg, |e, l| seen.push((e, l))).unwrap();
        assert_eq!(report.steps, 6 * 4);
        assert_eq!(seen.len(), 6);
        (report, write_checkpoint(&model).unwrap())
    };
    let (r1, c1) = run();
    let (r2, c2) = run();
    assert_eq!(r1, r2);
    assert_eq!(c1, c2);
    assert!(r1.epoch_losses[5] < r1.epoch_losses[0], "{:?}", r1.epoch_losses);
}

#[test]
fn training_rejects_bad_inputs() {
    let mut model = CcmModel::init(tiny_config(), 4).unwrap();
    let empty = TrainingSet::for_model(&model);
    assert!(matches!(train(&mut model, &empty, &TrainConfig::default(), |_, _| {}), Err(Error::Config(_))));
    let bad = TrainConfig { batch_size: 0, ..Default::default() };
    assert!(bad.validate().is_err());
    let cfg = TrainConfig::default();
    assert_eq!(cfg.lr_at(24), 5e-4);
    assert_eq!(cfg.lr_at(25), 2.5e-4);
    let enc = CfeEncoderConfig { input_bins: 32, widths: [2, 2, 2, 2], hidden: 4, out_dim: 8 };
    let mut other = CcmModel::init(ModelConfig::reduced(32, [2, 2, 2, 2], enc), 1).unwrap();
    let cams = synthesize_dataset(1, 1, 1).unwrap();
    let set = training_set(&model, &cams);
    assert!(train(&mut other, &set, &cfg, |_, _| {}).is_err());
}

#[test]
fn model_configuration_is_validated() {
    let mut cfg = tiny_config();
    cfg.encoder.input_bins = 16;
    assert!(CcmModel::init(cfg, 0).is_err());
    let mut cfg = tiny_config();
    cfg.backbone.bins = 48;
    assert!(cfg.validate().is_err());
    let mut cfg = tiny_config();
    cfg.backbone.in_channels = 9;
    assert!(cfg.validate().is_err());
    assert!(ModelConfig::default().validate().is_ok());
}

#[test]
fn checkpoints_round_trip() {
    let model = CcmModel::init(oracle_config(), 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &model).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.config, model.config);
    for ((n1, p1), (n2, p2)) in model.params.iter().zip(back.params.iter()) {
        assert_eq!(n1, n2);
        // Parameters are stored as f32.
        for (a, b) in p1.value.data().iter().zip(p2.value.data()) {
            assert_eq!(*a as f32 as f64, *b);
        }
    }
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"CCMK");
    assert_eq!(write_checkpoint(&back).unwrap(), bytes);
}

#[test]
fn corrupt_checkpoints_report_offsets() {
    let bytes = write_checkpoint(&CcmModel::init(tiny_config(), 1).unwrap()).unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(read_checkpoint(&bad, "c"), Err(Error::Format { offset: 0, .. })));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(read_checkpoint(&bad, "c"), Err(Error::Format { offset: 4, .. })));
    match read_checkpoint(&bytes[..bytes.len() - 10], "c") {
        Err(Error::Format { offset, .. }) => assert!(offset > 12),
        other => panic!("expected a format error, got {other:?}"),
    }
    let mut extra = bytes.clone();
    extra.extend_from_slice(&[0; 4]);
    assert!(read_checkpoint(&extra, "c").is_err());
    assert!(matches!(read_checkpoint(&bytes[..6], "c"), Err(Error::Format { .. })));
}
