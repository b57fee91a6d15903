//! Central finite-difference gradient checks for every trainable kernel.
//!
//! Each target builds a random case from a seed, evaluates the analytic
//! gradient of `L = Σ R ⊙ f(·)` for a fixed random `R`, and compares it entry by
//! entry against `(L(θ + h) − L(θ − h)) / 2h`. An entry passes when
//! `|analytic − numeric| ≤ tol · max(1, |numeric|)`.
//!
//! All checks run in `f64`. Multiplication-free paths are evaluated with
//! weights and activations bounded away from zero, where the surrogate
//! derivative and the `tanh(α·)`-relaxed forward agree with the exact one.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::layers::{BatchNorm, Bottleneck, BottleneckConfig, FwhtLayer, FwhtLayerConfig};
use crate::mf_ops::{mf_depthwise_conv_backward, ConvGeometry, MfKernel, MfVariant, Padding, KERNEL, TAPS};
use crate::tensor::{Shape, Tensor};
use crate::thresholding::{
    smooth_threshold, smooth_threshold_grad, weighted_smooth_threshold,
    weighted_smooth_threshold_grad, ThresholdVariant,
};

/// Step used by the scalar thresholding checks.
pub const POINT_STEP: f64 = 1e-4;
/// Step used by the layer checks.
pub const LAYER_STEP: f64 = 1e-6;
/// Random points drawn by the scalar thresholding checks.
pub const POINT_COUNT: usize = 10_000;
/// Distance kept between `|x|` and `T` by the scalar checks.
pub const KINK_MARGIN: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GradTarget {
    Smooth,
    Weighted,
    FwhtExpand,
    FwhtProject,
    MfConv,
    BatchNorm,
    Bottleneck,
}

impl GradTarget {
    pub const ALL: [GradTarget; 7] = [
        GradTarget::Smooth,
        GradTarget::Weighted,
        GradTarget::FwhtExpand,
        GradTarget::FwhtProject,
        GradTarget::MfConv,
        GradTarget::BatchNorm,
        GradTarget::Bottleneck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GradTarget::Smooth => "smooth",
            GradTarget::Weighted => "weighted",
            GradTarget::FwhtExpand => "fwht-expand",
            GradTarget::FwhtProject => "fwht-project",
            GradTarget::MfConv => "mf-conv",
            GradTarget::BatchNorm => "batch-norm",
            GradTarget::Bottleneck => "bottleneck",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    /// `1e-4` for the scalar thresholds, `1e-3` for linear layer paths and
    /// `1e-2` wherever an MF operator is involved.
    pub fn default_tolerance(self) -> f64 {
        match self {
            GradTarget::Smooth | GradTarget::Weighted => 1e-4,
            GradTarget::FwhtExpand | GradTarget::FwhtProject | GradTarget::BatchNorm => 1e-3,
            GradTarget::MfConv | GradTarget::Bottleneck => 1e-2,
        }
    }
}

/// Deviation summary for one gradient group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub count: usize,
    pub max_abs: f64,
    pub max_rel: f64,
    pub failures: usize,
}

impl GroupReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub target: GradTarget,
    pub variant: ThresholdVariant,
    pub case: String,
    pub tolerance: f64,
    pub groups: Vec<GroupReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(GroupReport::passed)
    }

    pub fn max_abs(&self) -> f64 {
        self.groups.iter().map(|g| g.max_abs).fold(0.0, f64::max)
    }

    pub fn max_rel(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel).fold(0.0, f64::max)
    }
}

/// Accumulates analytic/numeric pairs for one group.
#[derive(Debug)]
struct Tally {
    tol: f64,
    report: GroupReport,
}

impl Tally {
    fn new(name: impl Into<String>, tol: f64) -> Self {
        Self {
            tol,
            report: GroupReport {
                name: name.into(),
                count: 0,
                max_abs: 0.0,
                max_rel: 0.0,
                failures: 0,
            },
        }
    }

    fn push(&mut self, analytic: f64, numeric: f64) {
        let err = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        let r = &mut self.report;
        r.count += 1;
        r.max_abs = r.max_abs.max(err);
        if scale > 0.0 {
            r.max_rel = r.max_rel.max(err / scale);
        }
        if !(err <= self.tol * numeric.abs().max(1.0)) {
            r.failures += 1;
        }
    }
}

/// Runs `target` with the smooth threshold variant.
pub fn check(target: GradTarget, seed: u64, tol: f64) -> Result<GradCheckReport> {
    check_with_variant(target, ThresholdVariant::Smooth, seed, tol)
}

/// Runs `target`; `variant` selects the threshold of FWHT layers and the bottleneck.
pub fn check_with_variant(
    target: GradTarget,
    variant: ThresholdVariant,
    seed: u64,
    tol: f64,
) -> Result<GradCheckReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let (case, groups) = match target {
        GradTarget::Smooth => ("10000 points".to_string(), smooth_points(&mut rng, tol)),
        GradTarget::Weighted => ("10000 points".to_string(), weighted_points(&mut rng, tol)),
        GradTarget::FwhtExpand => fwht_case(&mut rng, variant, true, tol)?,
        GradTarget::FwhtProject => fwht_case(&mut rng, variant, false, tol)?,
        GradTarget::MfConv => mf_conv_case(&mut rng, tol)?,
        GradTarget::BatchNorm => batch_norm_case(&mut rng, tol)?,
        GradTarget::Bottleneck => bottleneck_case(&mut rng, variant, tol)?,
    };
    Ok(GradCheckReport {
        target,
        variant,
        case,
        tolerance: tol,
        groups,
    })
}

fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// `|x| ∈ [T + margin, T + 3]` with a random sign.
fn off_kink(rng: &mut StdRng, t: f64) -> f64 {
    let m = t + rng.gen_range(KINK_MARGIN..3.0);
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

fn smooth_points(rng: &mut StdRng, tol: f64) -> Vec<GroupReport> {
    let mut dx = Tally::new("dx", tol);
    let mut dt = Tally::new("dT", tol);
    for _ in 0..POINT_COUNT {
        let t: f64 = rng.gen_range(0.0..2.0);
        let x = off_kink(rng, t);
        let (gx, gt) = smooth_threshold_grad(x, t);
        dx.push(gx, central(|v| smooth_threshold(v, t), x, POINT_STEP));
        dt.push(gt, central(|v| smooth_threshold(x, v), t, POINT_STEP));
    }
    vec![dx.report, dt.report]
}

fn weighted_points(rng: &mut StdRng, tol: f64) -> Vec<GroupReport> {
    let mut dx = Tally::new("dx", tol);
    let mut dw = Tally::new("dw", tol);
    let mut dt = Tally::new("dT", tol);
    for _ in 0..POINT_COUNT {
        let t: f64 = rng.gen_range(0.0..2.0);
        let w: f64 = rng.gen_range(0.5..1.5);
        let x = off_kink(rng, t) / w;
        let (gx, gw, gt) = weighted_smooth_threshold_grad(x, w, t);
        dx.push(gx, central(|v| weighted_smooth_threshold(v, w, t), x, POINT_STEP));
        dw.push(gw, central(|v| weighted_smooth_threshold(x, v, t), w, POINT_STEP));
        dt.push(gt, central(|v| weighted_smooth_threshold(x, w, v), t, POINT_STEP));
    }
    vec![dx.report, dw.report, dt.report]
}

fn random_tensor(rng: &mut StdRng, shape: Shape, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Magnitude in `[lo, hi)` with a random sign.
fn signed_away_from_zero(rng: &mut StdRng, lo: f64, hi: f64) -> f64 {
    let m = rng.gen_range(lo..hi);
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

fn random_spatial(rng: &mut StdRng) -> (usize, usize, usize) {
    (rng.gen_range(1..=2), rng.gen_range(2..=6), rng.gen_range(2..=6))
}

/// Compares `analytic` with central differences of `loss` over each entry of `values`.
fn compare_group(
    name: &str,
    tol: f64,
    values: &[f64],
    analytic: &[f64],
    mut loss: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<GroupReport> {
    let mut tally = Tally::new(name, tol);
    let mut probe = values.to_vec();
    for i in 0..values.len() {
        probe[i] = values[i] + LAYER_STEP;
        let up = loss(&probe)?;
        probe[i] = values[i] - LAYER_STEP;
        let down = loss(&probe)?;
        probe[i] = values[i];
        tally.push(analytic[i], (up - down) / (2.0 * LAYER_STEP));
    }
    Ok(tally.report)
}

fn weighted_sum(out: &Tensor<f64>, r: &Tensor<f64>) -> Result<f64> {
    out.dot(r)
}

fn fwht_case(
    rng: &mut StdRng,
    variant: ThresholdVariant,
    expand: bool,
    tol: f64,
) -> Result<(String, Vec<GroupReport>)> {
    let (n, h, w) = random_spatial(rng);
    let (cin, cout) = if expand {
        let cin = rng.gen_range(1..=4usize);
        (cin, rng.gen_range(cin..=8))
    } else {
        let cin = rng.gen_range(2..=8usize);
        (cin, rng.gen_range(1..cin))
    };
    let cfg = if expand {
        FwhtLayerConfig::expand(cin, cout, variant)?
    } else {
        FwhtLayerConfig::project(cin, cout, variant)?
    };
    let mut layer = FwhtLayer::<f64>::new(cfg);
    for t in &mut layer.params.thresholds {
        *t = rng.gen_range(0.0..0.3);
    }
    if let Some(ws) = layer.params.weights.as_mut() {
        for v in ws {
            *v = rng.gen_range(0.5..1.5);
        }
    }
    let x = random_tensor(rng, Shape::new(n, h, w, cin)?, -2.0, 2.0);
    let (z, cache) = layer.forward(&x)?;
    let r = random_tensor(rng, z.shape(), -1.0, 1.0);
    let (gx, grads) = layer.backward(&r, &cache)?;

    let mut groups = vec![compare_group("input", tol, x.data(), gx.data(), |v| {
        let xi = Tensor::new(x.shape(), v.to_vec())?;
        weighted_sum(&layer.forward(&xi)?.0, &r)
    })?];
    if !layer.params.thresholds.is_empty() {
        let base = layer.params.thresholds.clone();
        groups.push(compare_group("thresholds", tol, &base, &grads.thresholds, |v| {
            let mut l = layer.clone();
            l.params.thresholds = v.to_vec();
            weighted_sum(&l.forward(&x)?.0, &r)
        })?);
    }
    if let (Some(base), Some(g)) = (layer.params.weights.clone(), grads.weights.as_ref()) {
        groups.push(compare_group("weights", tol, &base, g, |v| {
            let mut l = layer.clone();
            l.params.weights = Some(v.to_vec());
            weighted_sum(&l.forward(&x)?.0, &r)
        })?);
    }
    let kind = if expand { "expand" } else { "project" };
    Ok((format!("{kind} {cin}->{cout} on {n}x{h}x{w}x{cin}, {}", variant.name()), groups))
}

/// Depthwise sweep with every `sign` replaced by `tanh(α·)`, written
/// independently of the library kernels.
fn relaxed_mf_conv(x: &Tensor<f64>, kernel: &MfKernel<f64>) -> Result<Tensor<f64>> {
    let s = x.shape();
    let g = ConvGeometry::new(s.h, s.w, kernel.stride, Padding::Same)?;
    let out_shape = Shape::new(s.n, g.out_h, g.out_w, s.c)?;
    let a = kernel.alpha;
    let mut out = Tensor::zeros(out_shape);
    for n in 0..s.n {
        for oi in 0..g.out_h {
            for oj in 0..g.out_w {
                for c in 0..s.c {
                    let mut acc = 0.0;
                    for ky in 0..KERNEL {
                        for kx in 0..KERNEL {
                            let ii = (oi * kernel.stride + ky) as isize - g.pad_top as isize;
                            let jj = (oj * kernel.stride + kx) as isize - g.pad_left as isize;
                            if ii < 0 || jj < 0 || ii >= s.h as isize || jj >= s.w as isize {
                                continue;
                            }
                            let xv = x.at(n, ii as usize, jj as usize, c);
                            let wv = kernel.at(ky, kx, c);
                            let (aw, ax) = (wv.abs(), xv.abs());
                            let mag = match kernel.variant {
                                MfVariant::SumMag => aw + ax,
                                MfVariant::MaxMag => 2.0 * aw.max(ax),
                                MfVariant::MinMag => 2.0 * aw.min(ax),
                            };
                            acc += (a * wv).tanh() * (a * xv).tanh() * mag;
                        }
                    }
                    out.data_mut()[out_shape.index(n, oi, oj, c)] = acc;
                }
            }
        }
    }
    Ok(out)
}

fn mf_conv_case(rng: &mut StdRng, tol: f64) -> Result<(String, Vec<GroupReport>)> {
    let (n, h, w) = random_spatial(rng);
    let c = rng.gen_range(1..=8usize);
    let stride = rng.gen_range(1..=2usize);
    let weights = (0..TAPS * c)
        .map(|_| signed_away_from_zero(rng, 0.75, 1.5))
        .collect();
    let kernel = MfKernel::new(weights, c, stride)?;
    let shape = Shape::new(n, h, w, c)?;
    let x = Tensor::from_fn(shape, |_| signed_away_from_zero(rng, 0.75, 1.5));
    let out_shape = kernel.output_shape(shape)?;
    let r = random_tensor(rng, out_shape, -1.0, 1.0);
    let (gx, gw) = mf_depthwise_conv_backward(&x, &kernel, &r)?;
    let groups = vec![
        compare_group("input", tol, x.data(), gx.data(), |v| {
            weighted_sum(&relaxed_mf_conv(&Tensor::new(shape, v.to_vec())?, &kernel)?, &r)
        })?,
        compare_group("weights", tol, &kernel.weights, &gw, |v| {
            let mut k = kernel.clone();
            k.weights = v.to_vec();
            weighted_sum(&relaxed_mf_conv(&x, &k)?, &r)
        })?,
    ];
    Ok((format!("{n}x{h}x{w}x{c}, stride {stride}"), groups))
}

fn batch_norm_case(rng: &mut StdRng, tol: f64) -> Result<(String, Vec<GroupReport>)> {
    let (n, h, w) = random_spatial(rng);
    let c = rng.gen_range(1..=8usize);
    let mut bn = BatchNorm::<f64>::new(c);
    for g in &mut bn.gamma {
        *g = rng.gen_range(0.5..1.5);
    }
    for b in &mut bn.beta {
        *b = rng.gen_range(-0.5..0.5);
    }
    let shape = Shape::new(n, h, w, c)?;
    let x = random_tensor(rng, shape, -2.0, 2.0);
    let (y, cache) = bn.forward(&x, true)?;
    let r = random_tensor(rng, y.shape(), -1.0, 1.0);
    let (gx, grads) = bn.backward(&r, &cache)?;
    let groups = vec![
        compare_group("input", tol, x.data(), gx.data(), |v| {
            weighted_sum(&bn.forward(&Tensor::new(shape, v.to_vec())?, true)?.0, &r)
        })?,
        compare_group("gamma", tol, &bn.gamma, &grads.gamma, |v| {
            let mut b = bn.clone();
            b.gamma = v.to_vec();
            weighted_sum(&b.forward(&x, true)?.0, &r)
        })?,
        compare_group("beta", tol, &bn.beta, &grads.beta, |v| {
            let mut b = bn.clone();
            b.beta = v.to_vec();
            weighted_sum(&b.forward(&x, true)?.0, &r)
        })?,
    ];
    Ok((format!("{n}x{h}x{w}x{c}, training statistics"), groups))
}

/// Parameters are set so the activations feeding the MF stage lie in
/// `[1, 5]` and the depthwise weights have magnitude at least `0.75`.
fn bottleneck_case(
    rng: &mut StdRng,
    variant: ThresholdVariant,
    tol: f64,
) -> Result<(String, Vec<GroupReport>)> {
    let k = if rng.gen_bool(0.5) { 2 } else { 4 };
    let k_prime = if rng.gen_bool(0.5) { k } else { 2 * k };
    let s = rng.gen_range(1..=2usize);
    let cfg = BottleneckConfig::new(k, k_prime, 2, s)?.with_variant(variant);
    let mut block = Bottleneck::<f64>::new(cfg, rng)?;
    for (name, v) in block.params_mut() {
        for e in v.iter_mut() {
            *e = match name {
                "expand.thresholds" | "project.thresholds" => rng.gen_range(0.0..0.3),
                "expand.weights" | "project.weights" => rng.gen_range(0.5..1.5),
                "bn1.gamma" => rng.gen_range(0.3..0.35),
                "bn1.beta" => rng.gen_range(2.9..3.0),
                "depthwise.weights" => signed_away_from_zero(rng, 0.75, 1.5),
                n if n.ends_with("gamma") => rng.gen_range(0.5..1.5),
                _ => rng.gen_range(1.0..2.0),
            };
        }
    }
    let shape = Shape::new(2, 4, 4, k)?;
    let x = random_tensor(rng, shape, -2.0, 2.0);
    let (y, cache) = block.forward(&x, true)?;
    let r = random_tensor(rng, y.shape(), -1.0, 1.0);
    let (gx, grads) = block.backward(&r, &cache)?;
    let mut groups = vec![compare_group("input", tol, x.data(), gx.data(), |v| {
        weighted_sum(&block.forward(&Tensor::new(shape, v.to_vec())?, true)?.0, &r)
    })?];
    let mut probe = block.clone();
    let bases: Vec<(&'static str, Vec<f64>)> =
        probe.params_mut().into_iter().map(|(n, v)| (n, v.clone())).collect();
    for ((name, base), (gname, g)) in bases.iter().zip(grads.named()) {
        debug_assert_eq!(*name, gname);
        groups.push(compare_group(name, tol, base, g, |v| {
            let mut b = block.clone();
            for (n, p) in b.params_mut() {
                if n == *name {
                    p.copy_from_slice(v);
                }
            }
            weighted_sum(&b.forward(&x, true)?.0, &r)
        })?);
    }
    Ok((
        format!("k={k} k'={k_prime} t=2 s={s} on 2x4x4x{k}, {}", variant.name()),
        groups,
    ))
}
