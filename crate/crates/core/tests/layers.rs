use hadanet::layers::{
    pointwise_conv_params, Bottleneck, BottleneckConfig, CountParams, FwhtLayer, FwhtLayerConfig,
    LayerSizes,
};
use hadanet::thresholding::ThresholdVariant;
use hadanet::wht::{fwht, TransformPlan};
use hadanet::{Shape, Tensor64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sylvester construction, scaled to be orthonormal.
fn hadamard(m: usize) -> Vec<Vec<f64>> {
    let mut h = vec![vec![1.0]];
    while h.len() < m {
        let n = h.len();
        let mut next = vec![vec![0.0; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = h[i][j];
                next[i][j + n] = h[i][j];
                next[i + n][j] = h[i][j];
                next[i + n][j + n] = -h[i][j];
            }
        }
        h = next;
    }
    let s = 1.0 / (m as f64).sqrt();
    h.iter().map(|r| r.iter().map(|v| v * s).collect()).collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for l in 0..k {
            for j in 0..m {
                out[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    out
}

/// `out × in` matrix of the identity-variant projection: slice ∘ H_Q ∘ pool ∘ H_P ∘ pad.
fn projection_matrix(cin: usize, cout: usize) -> Vec<Vec<f64>> {
    let p = cin.next_power_of_two();
    let q = cout.next_power_of_two();
    let r = p / q;
    let mut pool = vec![vec![0.0; p]; q];
    pool[0][0] = 1.0 / r as f64;
    for i in 1..q {
        for j in 0..r {
            pool[i][1 + (i - 1) * r + j] = 1.0 / r as f64;
        }
    }
    let full = matmul(&hadamard(q), &matmul(&pool, &hadamard(p)));
    full[..cout].iter().map(|row| row[..cin].to_vec()).collect()
}

fn random(shape: Shape, seed: u64) -> Tensor64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor64::from_fn(shape, |_| rng.gen_range(-3.0..3.0))
}

#[test]
fn identity_projection_matches_matrix_oracle() {
    for (cin, cout) in [(6, 3), (12, 8), (24, 4), (96, 16), (8, 8), (5, 1)] {
        let layer = FwhtLayer::<f64>::new(
            FwhtLayerConfig::project(cin, cout, ThresholdVariant::Identity).unwrap(),
        );
        let x = random(Shape::new(2, 3, 2, cin).unwrap(), cin as u64);
        let z = layer.forward(&x).unwrap().0;
        let m = projection_matrix(cin, cout);
        for (zv, xv) in z.channel_vectors().zip(x.channel_vectors()) {
            for (o, row) in m.iter().enumerate() {
                let want: f64 = row.iter().zip(xv).map(|(a, b)| a * b).sum();
                assert!((zv[o] - want).abs() < 1e-5, "({cin},{cout}) ch {o}");
            }
        }
    }
}

#[test]
fn identity_expansion_recovers_input() {
    for (cin, cout) in [(3, 6), (4, 4), (5, 17), (16, 96)] {
        let layer = FwhtLayer::<f64>::new(
            FwhtLayerConfig::expand(cin, cout, ThresholdVariant::Identity).unwrap(),
        );
        let x = random(Shape::new(1, 2, 2, cin).unwrap(), 11);
        let z = layer.forward(&x).unwrap().0;
        assert_eq!(z.shape().c, cout);
        for (zv, xv) in z.channel_vectors().zip(x.channel_vectors()) {
            for j in 0..cout {
                let want = if j < cin { xv[j] } else { 0.0 };
                assert!((zv[j] - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn zero_soft_thresholds_equal_identity() {
    let x = random(Shape::new(2, 2, 2, 6).unwrap(), 3);
    for (cin, cout) in [(6, 12), (6, 3)] {
        let soft = FwhtLayer::<f64>::new(FwhtLayerConfig::new(cin, cout, ThresholdVariant::Soft).unwrap());
        let id = FwhtLayer::<f64>::new(FwhtLayerConfig::new(cin, cout, ThresholdVariant::Identity).unwrap());
        let a = soft.forward(&x).unwrap().0;
        let b = id.forward(&x).unwrap().0;
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }
}

#[test]
fn huge_thresholds_keep_only_the_mean() {
    let cfg = FwhtLayerConfig::expand(3, 6, ThresholdVariant::Smooth).unwrap();
    let mut layer = FwhtLayer::<f64>::new(cfg);
    layer.params.thresholds.iter_mut().for_each(|t| *t = 1e6);
    let x = random(Shape::new(2, 2, 3, 3).unwrap(), 5);
    let (z, cache) = layer.forward(&x).unwrap();
    for (zv, xv) in z.channel_vectors().zip(x.channel_vectors()) {
        let mean = xv.iter().sum::<f64>() / 8.0;
        assert!(zv.iter().all(|v| (v - mean).abs() < 1e-12));
    }
    let g = random(z.shape(), 6);
    let (gx, grads) = layer.backward(&g, &cache).unwrap();
    assert!(grads.thresholds.iter().all(|&t| t == 0.0));
    for (gv, up) in gx.channel_vectors().zip(g.channel_vectors()) {
        let dc = up.iter().sum::<f64>() / 8.0;
        assert!(gv.iter().all(|v| (v - dc).abs() < 1e-12));
    }
}

/// Moving one threshold only changes the transform coefficient it owns.
#[test]
fn one_threshold_touches_one_coefficient() {
    for (cin, cout) in [(8usize, 16usize), (16, 4)] {
        let cfg = FwhtLayerConfig::new(cin, cout, ThresholdVariant::Smooth).unwrap();
        let xin = random(Shape::new(2, 3, 3, cin).unwrap(), 9);
        let base = FwhtLayer::<f64>::new(cfg);
        let z0 = base.forward(&xin).unwrap().0;
        let r = match cfg.sizes() {
            LayerSizes::Project { r, .. } => r,
            LayerSizes::Expand { .. } => 1,
        };
        for j in [0usize, 3, cfg.threshold_count() - 1] {
            let mut moved = base.clone();
            moved.params.thresholds[j] = 0.5;
            let z1 = moved.forward(&xin).unwrap().0;
            let plan = TransformPlan::orthonormal(cout).unwrap();
            let diff = fwht(&z1.add(&z0.scale(-1.0)).unwrap(), &plan).unwrap();
            let owner = 1 + j / r;
            let mut touched = false;
            for v in diff.channel_vectors() {
                for (k, d) in v.iter().enumerate() {
                    if k == owner {
                        touched |= d.abs() > 1e-9;
                    } else {
                        assert!(d.abs() < 1e-12, "({cin},{cout}) T{j} moved coefficient {k}");
                    }
                }
            }
            assert!(touched, "({cin},{cout}) T{j} had no effect");
        }
    }
}

const MOBILENET_BLOCKS: [(usize, usize, usize); 12] = [
    (32, 16, 1),
    (16, 24, 6),
    (24, 24, 6),
    (24, 32, 6),
    (32, 32, 6),
    (32, 64, 6),
    (64, 64, 6),
    (64, 96, 6),
    (96, 96, 6),
    (96, 160, 6),
    (160, 160, 6),
    (160, 320, 6),
];

#[test]
fn parameter_accounting() {
    let e = FwhtLayerConfig::new(160, 1024, ThresholdVariant::Smooth).unwrap();
    assert_eq!(e.count_params(), 1023);
    let w = FwhtLayerConfig::new(160, 1024, ThresholdVariant::WeightedSmooth).unwrap();
    assert_eq!(w.count_params(), 2046);
    for (k, kp, t) in MOBILENET_BLOCKS {
        for v in [ThresholdVariant::Smooth, ThresholdVariant::WeightedSmooth] {
            let ex = FwhtLayerConfig::new(k, t * k, v).unwrap();
            let pr = FwhtLayerConfig::new(t * k, kp, v).unwrap();
            assert!(ex.count_params() < pointwise_conv_params(k, t * k), "expand {k}x{t}");
            assert!(pr.count_params() < pointwise_conv_params(t * k, kp), "project {}->{kp}", t * k);
        }
    }
}

#[test]
fn plug_and_play_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (k, kp, t) in MOBILENET_BLOCKS.iter().copied().filter(|b| b.0 <= 64) {
        for s in [1, 2] {
            let cfg = BottleneckConfig::new(k, kp, t, s).unwrap();
            let block = Bottleneck::<f32>::new(cfg, &mut rng).unwrap();
            let x = hadanet::Tensor32::zeros(Shape::new(1, 6, 6, k).unwrap());
            let y = block.forward(&x, false).unwrap().0;
            let h = 6usize.div_ceil(s);
            assert_eq!(y.shape(), Shape::new(1, h, h, kp).unwrap());
            assert_eq!(block.count_params(), block.param_count());
        }
    }
}
