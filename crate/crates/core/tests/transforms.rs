use hadanet::wht::{
    fwht, fwht_in_place, hadamard_matrix, naive_wht, sequency_permutation, walsh_matrix, Ordering,
    Scaling, TransformPlan,
};
use hadanet::{Shape, Tensor32, Tensor64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vectors(count: usize, m: usize, seed: u64) -> Tensor64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor64::from_fn(Shape::new(count, 1, 1, m).unwrap(), |_| rng.gen_range(-1.0..1.0))
}

/// `H[i][j] = (−1)^popcount(i & j)`.
fn bitwise_entry(i: usize, j: usize) -> f64 {
    if (i & j).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[test]
fn fast_matches_naive_for_every_size() {
    for k in 1..=10u32 {
        let m = 1usize << k;
        let x = vectors(16, m, k as u64);
        for ordering in [Ordering::Natural, Ordering::Sequency] {
            let plan = TransformPlan::new(m, ordering, Scaling::None).unwrap();
            let fast = fwht(&x, &plan).unwrap();
            let slow = naive_wht(&x, &plan).unwrap();
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "m={m}");
            }
        }
    }
}

#[test]
fn natural_order_matches_bitwise_formula() {
    for k in 0..=6u32 {
        let h = hadamard_matrix(k);
        for i in 0..h.size() {
            for j in 0..h.size() {
                assert_eq!(h.get(i, j) as f64, bitwise_entry(i, j));
            }
        }
    }
}

#[test]
fn walsh_rows_are_permuted_hadamard_rows() {
    for k in 1..=6u32 {
        let perm = sequency_permutation(k);
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..1usize << k).collect::<Vec<_>>());
        let (h, w) = (hadamard_matrix(k), walsh_matrix(k));
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(w.row(i), h.row(p));
        }
    }
}

#[test]
fn inverse_scaling_undoes_the_transform() {
    for m in [2usize, 8, 64, 1024] {
        let x = vectors(8, m, 1);
        let fwd = fwht(&x, &TransformPlan::new(m, Ordering::Natural, Scaling::None).unwrap()).unwrap();
        let back = fwht(&fwd, &TransformPlan::new(m, Ordering::Natural, Scaling::Inverse).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x).unwrap() < 1e-12);
        let ortho = TransformPlan::new(m, Ordering::Sequency, Scaling::Orthonormal).unwrap();
        let twice = fwht(&fwht(&x, &ortho).unwrap(), &ortho).unwrap();
        assert!(twice.max_abs_diff(&x).unwrap() < 1e-12);
    }
}

#[test]
fn orthonormal_transform_preserves_energy() {
    let x = vectors(4, 256, 2);
    let y = fwht(&x, &TransformPlan::orthonormal(256).unwrap()).unwrap();
    let (ex, ey) = (x.dot(&x).unwrap(), y.dot(&y).unwrap());
    assert!((ex - ey).abs() < 1e-10 * ex);
}

#[test]
fn single_precision_stays_close_to_double() {
    let x = vectors(4, 512, 3);
    let plan = TransformPlan::orthonormal(512).unwrap();
    let y64 = fwht(&x, &plan).unwrap();
    let y32: Tensor32 = fwht(&x.cast::<f32>(), &plan).unwrap();
    assert!(y32.cast::<f64>().max_abs_diff(&y64).unwrap() < 1e-5);
}

#[test]
fn in_place_kernel_on_a_slice() {
    let mut v = [1.0f64, 2.0, 3.0, 4.0];
    fwht_in_place(&mut v);
    assert_eq!(v, [10.0, -2.0, -4.0, 0.0]);
}

#[test]
fn sizes_must_be_powers_of_two() {
    assert!(TransformPlan::new(6, Ordering::Natural, Scaling::None).is_err());
    assert!(TransformPlan::new(0, Ordering::Natural, Scaling::None).is_err());
    let x = vectors(1, 8, 0);
    assert!(fwht(&x, &TransformPlan::orthonormal(4).unwrap()).is_err());
}
