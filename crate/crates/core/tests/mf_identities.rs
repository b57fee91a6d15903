use hadanet::mf_ops::{
    mf_dot, mf_dot_sign_form, mf_grad, mf_scalar, mf_scalar_hadamard_form, sign_derivative,
    MfVariant,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn sum_and_sign_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let n = rng.gen_range(1..64);
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let a = mf_dot(&w, &x, MfVariant::SumMag).unwrap();
        let b = mf_dot_sign_form(&w, &x).unwrap();
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn closed_forms_match_hadamard_forms_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10_000 {
        let (w, x) = (rng.gen_range(-4i32..=4) as f64 / 4.0, rng.gen_range(-4i32..=4) as f64 / 4.0);
        for v in MfVariant::ALL {
            assert_eq!(mf_scalar(w, x, v), mf_scalar_hadamard_form(w, x, v), "{v:?} {w} {x}");
        }
    }
}

#[test]
fn self_product_is_twice_the_l1_norm() {
    let x = [0.5f64, -1.25, 3.0, 0.0, -0.75];
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    assert_eq!(mf_dot(&x, &x, MfVariant::SumMag).unwrap(), 2.0 * l1);
}

#[test]
fn sign_follows_the_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10_000 {
        let (w, x): (f64, f64) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        for v in MfVariant::ALL {
            let p = mf_scalar(w, x, v);
            assert_eq!(p.signum(), (w * x).signum());
        }
    }
}

#[test]
fn surrogate_formula_reevaluated() {
    let alpha = 10.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..1000 {
        let (w, x): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let delta = |u: f64| alpha / (alpha * u).cosh().powi(2);
        let (dw, dx) = mf_grad(w, x, MfVariant::SumMag, alpha);
        assert!((dx - (w.signum() + 2.0 * w * delta(x))).abs() < 1e-9);
        assert!((dw - (x.signum() + 2.0 * x * delta(w))).abs() < 1e-9);
        assert!((sign_derivative(x, alpha) - delta(x)).abs() < 1e-9);
    }
    assert_eq!(mf_grad(3.0, 0.0, MfVariant::SumMag, 10.0).1, 61.0);
}
