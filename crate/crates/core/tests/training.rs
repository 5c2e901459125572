mod common;

use sgumlp::data::{concat_modalities, split, synth_scene, BandStats, PatchDataset, SceneSpec};
use sgumlp::layers::init_params;
use sgumlp::training::{
    check_gradients, decode_checkpoint, decode_tensors, encode_checkpoint, evaluate, grad_check,
    toy_config, train, train_from, OptimState, OptimizerKind, OptimizerSettings, TrainSettings,
};
use sgumlp::{Error, ModelConfig, ModelParams, Variant};

fn small_config(bands: usize, classes: usize, variant: Variant) -> ModelConfig {
    ModelConfig {
        token_segment: 32,
        hidden_dim: 8,
        mixer_ffn_dim: 8,
        num_blocks: 1,
        ..ModelConfig::new(bands, classes, variant)
    }
}

fn small_dataset(fraction: f64) -> PatchDataset {
    let spec = SceneSpec {
        classes: 3,
        height: 32,
        width: 32,
        modality_bands: vec![2, 1],
        noise: 0.1,
        seed: 7,
    };
    let scene = synth_scene(&spec).unwrap();
    let stack = concat_modalities(&scene.stacks).unwrap();
    let (train_mask, _) = split(&scene.labels, fraction, 7).unwrap();
    let stats = BandStats::from_pixels(&stack, &train_mask).unwrap();
    PatchDataset::build(&stack, &scene.labels, &train_mask, 9, &stats).unwrap()
}

#[test]
fn gradient_check_passes_for_sgumlp() {
    let report = grad_check(&toy_config(Variant::SguMlp), 3).unwrap();
    assert!(report.passed(), "{}", report.render());
}

#[test]
fn gradient_check_flags_a_corrupted_gradient() {
    let config = toy_config(Variant::Mlp);
    let params = init_params::<f64>(&config, 0).unwrap();
    let mut wrong = ModelParams::<f64>::zeros(&config).unwrap();
    // Loss is the sum of head biases, so the true gradient is all ones there.
    for v in wrong.head_b.data_mut() {
        *v = 1.0;
    }
    let loss = |p: &ModelParams<f64>| Ok(p.head_b.data().iter().sum::<f64>());
    let ok = check_gradients(&params, &wrong, config.variant, loss).unwrap();
    assert!(ok.passed(), "{}", ok.render());
    wrong.head_b.data_mut()[1] = 1.01;
    let bad = check_gradients(&params, &wrong, config.variant, loss).unwrap();
    assert!(!bad.passed());
    assert_eq!(bad.worst().unwrap().name, "head.bias");
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let ds = small_dataset(0.05);
    let config = small_config(3, 3, Variant::SguMlp);
    let settings = TrainSettings {
        optimizer: OptimizerSettings {
            lr: 0.0,
            ..Default::default()
        },
        epochs: 1,
        batch_size: 16,
    };
    let init = init_params::<f32>(&config, 1).unwrap();
    let run = train_from(init.clone(), &ds, &config, &settings, 1).unwrap();
    assert_eq!(run.params, init);
    assert!(!run.loss_curve.is_empty());
}

#[test]
fn training_is_bit_identical_per_seed() {
    let ds = small_dataset(0.05);
    let config = small_config(3, 3, Variant::SguMlp);
    let settings = TrainSettings {
        epochs: 2,
        batch_size: 8,
        ..Default::default()
    };
    let a = train(&ds, &config, &settings, 5).unwrap();
    let b = train(&ds, &config, &settings, 5).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.loss_curve, b.loss_curve);
    let c = train(&ds, &config, &settings, 6).unwrap();
    assert_ne!(a.loss_curve, c.loss_curve);
}

fn scalar_adam(grads: &[f64], s: &OptimizerSettings) -> f64 {
    let (mut p, mut m, mut v) = (0.0, 0.0, 0.0);
    for (t, &g) in grads.iter().enumerate() {
        let t = t as i32 + 1;
        m = s.beta1 * m + (1.0 - s.beta1) * g;
        v = s.beta2 * v + (1.0 - s.beta2) * g * g;
        let mhat = m / (1.0 - s.beta1.powi(t));
        let vhat = v / (1.0 - s.beta2.powi(t));
        p -= s.lr * mhat / (vhat.sqrt() + s.eps);
    }
    p
}

#[test]
fn adam_matches_scalar_recurrence() {
    let config = toy_config(Variant::Mlp);
    let settings = OptimizerSettings {
        lr: 0.1,
        ..Default::default()
    };
    let mut params = ModelParams::<f64>::zeros(&config).unwrap();
    let mut opt = OptimState::new(settings, &params);
    let seq = [0.5, -2.0, 3.0, 0.01];
    for (i, &g) in seq.iter().enumerate() {
        let mut grads = ModelParams::<f64>::zeros(&config).unwrap();
        for t in grads.tensors_mut() {
            t.fill(g);
        }
        opt.step(&mut params, &grads).unwrap();
        if i == 0 {
            // The first bias-corrected step is lr·sign(g), up to eps.
            assert!((params.head_w.data()[0] + 0.1).abs() < 1e-6);
        }
    }
    let expected = scalar_adam(&seq, &settings);
    for t in params.tensors() {
        for &v in t.data() {
            assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
        }
    }
}

#[test]
fn sgd_momentum_matches_scalar_recurrence() {
    let config = toy_config(Variant::Mlp);
    let settings = OptimizerSettings {
        kind: OptimizerKind::SgdMomentum,
        lr: 0.1,
        beta1: 0.9,
        ..Default::default()
    };
    let mut params = ModelParams::<f64>::zeros(&config).unwrap();
    let mut opt = OptimState::new(settings, &params);
    let (mut p, mut m) = (0.0, 0.0);
    for g in [1.0, -0.5, 2.0] {
        let mut grads = ModelParams::<f64>::zeros(&config).unwrap();
        grads.head_b.fill(g);
        opt.step(&mut params, &grads).unwrap();
        m = 0.9 * m + g;
        p -= 0.1 * m;
    }
    assert!((params.head_b.data()[0] - p).abs() < 1e-12);
    assert_eq!(params.head_w.data()[0], 0.0);
}

#[test]
fn one_batch_overfits() {
    let mut ds = small_dataset(0.2);
    ds.samples.truncate(32);
    let config = small_config(3, 3, Variant::SguMlp);
    let settings = TrainSettings {
        optimizer: OptimizerSettings {
            lr: 3e-3,
            ..Default::default()
        },
        epochs: 200,
        batch_size: 32,
    };
    let run = train(&ds, &config, &settings, 0).unwrap();
    let cm = evaluate(&ds, &run.params, &config).unwrap();
    let oa = cm.overall_accuracy().unwrap();
    assert!(oa >= 0.99, "oa {oa}");
    assert!(run.loss_curve.last().unwrap() < &run.loss_curve[0]);
}

#[test]
fn checkpoint_round_trips_bit_exactly() {
    let config = small_config(3, 3, Variant::SguMlp);
    let params = init_params::<f32>(&config, 9).unwrap();
    let bytes = encode_checkpoint(&params);
    assert_eq!(&bytes[..4], b"SGUW");
    assert_eq!(decode_checkpoint(&bytes, &config).unwrap(), params);
}

#[test]
fn checkpoint_for_other_class_count_names_the_head() {
    let config = small_config(3, 3, Variant::SguMlp);
    let bytes = encode_checkpoint(&init_params::<f32>(&config, 9).unwrap());
    let other = ModelConfig {
        num_classes: 4,
        ..config
    };
    let err = decode_checkpoint(&bytes, &other).unwrap_err();
    assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    assert!(err.to_string().contains("head.weight"), "{err}");
}

#[test]
fn truncated_and_foreign_checkpoints_are_rejected() {
    let config = small_config(3, 3, Variant::Mlp);
    let bytes = encode_checkpoint(&init_params::<f32>(&config, 9).unwrap());
    assert!(decode_tensors(&bytes[..bytes.len() - 1]).is_err());
    let mut foreign = bytes.clone();
    foreign[0] = b'X';
    assert!(decode_tensors(&foreign).is_err());
    let mut long = bytes;
    long.push(0);
    assert!(decode_tensors(&long).is_err());
}
