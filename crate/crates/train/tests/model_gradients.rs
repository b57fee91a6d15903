use hadanet::thresholding::ThresholdVariant;
use hadanet::{Shape, Tensor64};
use hadanet_train::loss::cross_entropy;
use hadanet_train::model::{BlockSpec, Model, ModelKind, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_spec(kind: ModelKind) -> ModelSpec {
    ModelSpec {
        kind,
        variant: ThresholdVariant::Smooth,
        input_channels: 1,
        stem_channels: 4,
        stem_stride: 2,
        expansion: 2,
        blocks: vec![BlockSpec { k: 4, k_prime: 4, s: 1 }, BlockSpec { k: 4, k_prime: 8, s: 2 }],
        classes: 3,
        dropout: 0.0,
    }
}

fn loss(model: &Model<f64>, x: &Tensor64, labels: &[usize]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (logits, _) = model.forward(x, Some(&mut rng)).unwrap();
    cross_entropy(&logits, model.classes(), labels).unwrap().0
}

/// Compares every entry of the parameter vectors selected by `check` against central differences.
fn check_model(kind: ModelKind, check: impl Fn(&str) -> bool, tol: f64) {
    let model = Model::<f64>::new(small_spec(kind), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Tensor64::from_fn(Shape::new(3, 8, 8, 1).unwrap(), |_| rng.gen_range(0.0..1.0));
    let labels = [0, 2, 1];
    let mut step_rng = ChaCha8Rng::seed_from_u64(0);
    let (logits, cache) = model.forward(&x, Some(&mut step_rng)).unwrap();
    let (_, g) = cross_entropy(&logits, 3, &labels).unwrap();
    let grads = model.backward(&cache, &g).unwrap();
    let names: Vec<String> = model.params().into_iter().map(|p| p.name).collect();
    assert_eq!(names.len(), grads.len());
    let h = 1e-6;
    let mut checked = 0;
    for (k, name) in names.iter().enumerate() {
        if !check(name) {
            continue;
        }
        for i in 0..grads[k].len() {
            let mut up = model.clone();
            up.params_mut()[k][i] += h;
            let mut down = model.clone();
            down.params_mut()[k][i] -= h;
            let fd = (loss(&up, &x, &labels) - loss(&down, &x, &labels)) / (2.0 * h);
            let a = grads[k][i];
            assert!((a - fd).abs() <= tol * fd.abs().max(1e-2), "{name}[{i}]: analytic {a} numeric {fd}");
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn conv_twin_gradients_match_finite_differences() {
    check_model(ModelKind::ToyConv, |_| true, 1e-4);
}

/// Above the MF stage of the last block the chain is exact.
#[test]
fn fwht_model_gradients_downstream_of_the_mf_stage() {
    check_model(
        ModelKind::ToyFwht,
        |n| n.starts_with("head") || n.starts_with("blocks.1.bn3") || n.starts_with("blocks.1.project") || n.starts_with("blocks.1.bn2"),
        1e-4,
    );
}
