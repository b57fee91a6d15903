use hadanet::thresholding::ThresholdVariant;
use hadanet_train::loss::cross_entropy;
use hadanet_train::model::{BlockSpec, ModelKind, ModelSpec};
use hadanet_train::{evaluate, train, Dataset, Model, TrainConfig, TrainError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIDE: usize = 8;

/// Two classes: bright top half or bright bottom half, with pixel noise.
fn blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(n * SIDE * SIDE);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        for r in 0..SIDE {
            let bright = (r < SIDE / 2) == (label == 0);
            for _ in 0..SIDE {
                let base: f64 = if bright { 170.0 } else { 60.0 };
                pixels.push((base + rng.gen_range(-50.0..50.0)) as u8);
            }
        }
        labels.push(label);
    }
    Dataset { rows: SIDE, cols: SIDE, pixels, labels }
}

fn tiny_spec(variant: ThresholdVariant) -> ModelSpec {
    ModelSpec {
        stem_channels: 4,
        expansion: 2,
        blocks: vec![
            BlockSpec { k: 4, k_prime: 4, s: 1 },
            BlockSpec { k: 4, k_prime: 8, s: 2 },
        ],
        classes: 2,
        dropout: 0.0,
        ..ModelSpec::toy(ModelKind::ToyFwht, variant)
    }
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        batch: 16,
        epochs,
        seed: 11,
        ..TrainConfig::default()
    }
}

fn snapshot(model: &Model<f32>) -> Vec<Vec<u32>> {
    model.params().iter().map(|p| p.values.iter().map(|v| v.to_bits()).collect()).collect()
}

#[test]
fn separable_blobs_are_learned() {
    let data = blobs(200, 1);
    let mut model = Model::<f32>::new(tiny_spec(ThresholdVariant::Smooth), 2).unwrap();
    let history = train(&mut model, &data, None, &cfg(20), |_| {}).unwrap();
    let best = history.epochs.iter().map(|e| e.train_accuracy).fold(0.0, f64::max);
    assert!(best >= 0.99, "best train accuracy {best}");
    assert!(evaluate(&model, &blobs(100, 9), 50).unwrap() >= 0.95);
}

#[test]
fn loss_decreases_for_every_threshold_variant() {
    let data = blobs(200, 3);
    for variant in [ThresholdVariant::Soft, ThresholdVariant::Smooth, ThresholdVariant::WeightedSmooth] {
        let mut model = Model::<f32>::new(tiny_spec(variant), 4).unwrap();
        let history = train(&mut model, &data, None, &cfg(5), |_| {}).unwrap();
        let losses: Vec<f64> = history.epochs.iter().map(|e| e.train_loss).collect();
        assert!(losses[4] < losses[0], "{variant:?}: {losses:?}");
    }
}

#[test]
fn same_seed_reproduces_history_and_weights() {
    let (data, test) = (blobs(64, 5), blobs(32, 6));
    let run = || {
        let mut model = Model::<f32>::new(tiny_spec(ThresholdVariant::Smooth), 8).unwrap();
        let spec = ModelSpec { dropout: 0.2, ..model.spec.clone() };
        model = Model::new(spec, 8).unwrap();
        let h = train(&mut model, &data, Some(&test), &cfg(3), |_| {}).unwrap();
        (h, snapshot(&model))
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(a.0.epochs.len(), 3);
    assert!(a.0.epochs.iter().all(|e| e.test_accuracy.is_some()));
}

#[test]
fn zero_learning_rate_leaves_params_untouched() {
    let data = blobs(48, 7);
    let mut model = Model::<f32>::new(tiny_spec(ThresholdVariant::Smooth), 1).unwrap();
    let before = snapshot(&model);
    let zero = TrainConfig { lr: 0.0, ..cfg(2) };
    train(&mut model, &data, None, &zero, |_| {}).unwrap();
    assert_eq!(snapshot(&model), before);
}

#[test]
fn callback_sees_every_epoch() {
    let data = blobs(32, 2);
    let mut model = Model::<f32>::new(tiny_spec(ThresholdVariant::Smooth), 1).unwrap();
    let mut seen = Vec::new();
    let h = train(&mut model, &data, None, &cfg(3), |e| seen.push(e.epoch)).unwrap();
    assert_eq!(seen, vec![1, 2, 3]);
    assert_eq!(h.epochs.len(), 3);
    assert_eq!(h.best_test_accuracy(), None);
}

#[test]
fn bad_inputs_fail_before_training() {
    let mut model = Model::<f32>::new(tiny_spec(ThresholdVariant::Smooth), 1).unwrap();
    let empty = Dataset { rows: SIDE, cols: SIDE, pixels: vec![], labels: vec![] };
    assert!(matches!(train(&mut model, &empty, None, &cfg(1), |_| {}), Err(TrainError::EmptyDataset)));
    let mut wide = blobs(4, 1);
    wide.labels[2] = 5;
    assert!(matches!(
        train(&mut model, &wide, None, &cfg(1), |_| {}),
        Err(TrainError::LabelRange { label: 5, classes: 2 })
    ));
    let neg = TrainConfig { lr: -1.0, ..cfg(1) };
    assert!(matches!(train(&mut model, &blobs(4, 1), None, &neg, |_| {}), Err(TrainError::Config(_))));
    let broken = ModelSpec {
        blocks: vec![BlockSpec { k: 5, k_prime: 5, s: 1 }],
        ..tiny_spec(ThresholdVariant::Smooth)
    };
    assert!(Model::<f32>::new(broken, 0).is_err());
}

#[test]
fn every_threshold_vector_receives_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let spec = ModelSpec {
        blocks: vec![
            BlockSpec { k: 8, k_prime: 8, s: 1 },
            BlockSpec { k: 8, k_prime: 16, s: 2 },
            BlockSpec { k: 16, k_prime: 16, s: 1 },
        ],
        dropout: 0.0,
        ..ModelSpec::toy(ModelKind::ToyFwht, ThresholdVariant::Smooth)
    };
    let model = Model::<f64>::new(spec, 5).unwrap();
    let x = hadanet::Tensor::from_fn(hadanet::Shape::new(4, 12, 12, 1).unwrap(), |_| rng.gen_range(-3.0..3.0));
    let labels: Vec<usize> = (0..4).map(|i| i % 10).collect();
    let (logits, cache) = model.forward(&x, Some(&mut ChaCha8Rng::seed_from_u64(0))).unwrap();
    let (_, grad) = cross_entropy(&logits, 10, &labels).unwrap();
    let grads = model.backward(&cache, &grad).unwrap();
    let mut checked = 0;
    for (p, g) in model.params().iter().zip(&grads) {
        if p.name.ends_with("thresholds") {
            assert!(g.iter().any(|&v| v != 0.0), "{} got no gradient", p.name);
            checked += 1;
        }
    }
    assert_eq!(checked, 6);
}
