//! Shrinkage nonlinearities applied to transform-domain coefficients.
//!
//! All variants share the dead zone `|x| <= T`, where both value and
//! gradients are zero. At `|x| == T` exactly the dead-zone branch is used.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `sign(x)·(|x| − T)₊`.
#[inline]
pub fn soft_threshold<S: Scalar>(x: S, t: S) -> S {
    x.sgn() * (x.abs() - t).pos()
}

/// `(∂/∂x, ∂/∂T)` of [`soft_threshold`]; `∂/∂T ∈ {−1, 0, +1}`.
#[inline]
pub fn soft_threshold_grad<S: Scalar>(x: S, t: S) -> (S, S) {
    if x.abs() > t {
        let s = x.sgn();
        (s * s, -s)
    } else {
        (S::zero(), S::zero())
    }
}

/// `tanh(x)·(|x| − T)₊`.
#[inline]
pub fn smooth_threshold<S: Scalar>(x: S, t: S) -> S {
    let excess = x.abs() - t;
    if excess > S::zero() {
        x.fast_tanh() * excess
    } else {
        S::zero()
    }
}

/// `(∂/∂x, ∂/∂T)` of [`smooth_threshold`].
#[inline]
pub fn smooth_threshold_grad<S: Scalar>(x: S, t: S) -> (S, S) {
    let excess = x.abs() - t;
    if excess > S::zero() {
        let th = x.fast_tanh();
        ((S::one() - th * th) * excess + th * x.sgn(), -th)
    } else {
        (S::zero(), S::zero())
    }
}

/// `tanh(wx)·(|wx| − T)₊`.
#[inline]
pub fn weighted_smooth_threshold<S: Scalar>(x: S, w: S, t: S) -> S {
    smooth_threshold(w * x, t)
}

/// `(∂/∂x, ∂/∂w, ∂/∂T)` of [`weighted_smooth_threshold`].
#[inline]
pub fn weighted_smooth_threshold_grad<S: Scalar>(x: S, w: S, t: S) -> (S, S, S) {
    let (du, dt) = smooth_threshold_grad(w * x, t);
    (w * du, x * du, dt)
}

/// `max(x − T, 0)`.
#[inline]
pub fn relu_shift<S: Scalar>(x: S, t: S) -> S {
    (x - t).pos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ThresholdVariant {
    Soft,
    #[default]
    Smooth,
    WeightedSmooth,
    /// Plain ReLU with a trainable offset.
    ReluShift,
    /// No nonlinearity; parameters are ignored.
    Identity,
}

impl ThresholdVariant {
    pub const ALL: [ThresholdVariant; 5] = [
        ThresholdVariant::Soft,
        ThresholdVariant::Smooth,
        ThresholdVariant::WeightedSmooth,
        ThresholdVariant::ReluShift,
        ThresholdVariant::Identity,
    ];

    pub fn is_weighted(self) -> bool {
        self == ThresholdVariant::WeightedSmooth
    }

    /// Trainable scalars per thresholded coefficient.
    pub fn params_per_coefficient(self) -> usize {
        match self {
            ThresholdVariant::WeightedSmooth => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ThresholdVariant::Soft => "soft",
            ThresholdVariant::Smooth => "smooth",
            ThresholdVariant::WeightedSmooth => "weighted",
            ThresholdVariant::ReluShift => "relu",
            ThresholdVariant::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }

    #[inline]
    fn eval<S: Scalar>(self, x: S, t: S, w: S) -> S {
        match self {
            ThresholdVariant::Soft => soft_threshold(x, t),
            ThresholdVariant::Smooth => smooth_threshold(x, t),
            ThresholdVariant::WeightedSmooth => weighted_smooth_threshold(x, w, t),
            ThresholdVariant::ReluShift => relu_shift(x, t),
            ThresholdVariant::Identity => x,
        }
    }

    /// `(∂/∂x, ∂/∂T, ∂/∂w)`.
    #[inline]
    fn grad<S: Scalar>(self, x: S, t: S, w: S) -> (S, S, S) {
        let zero = S::zero();
        match self {
            ThresholdVariant::Soft => {
                let (dx, dt) = soft_threshold_grad(x, t);
                (dx, dt, zero)
            }
            ThresholdVariant::Smooth => {
                let (dx, dt) = smooth_threshold_grad(x, t);
                (dx, dt, zero)
            }
            ThresholdVariant::WeightedSmooth => {
                let (dx, dw, dt) = weighted_smooth_threshold_grad(x, w, t);
                (dx, dt, dw)
            }
            ThresholdVariant::ReluShift => {
                if x > t {
                    (S::one(), -S::one(), zero)
                } else {
                    (zero, zero, zero)
                }
            }
            ThresholdVariant::Identity => (S::one(), zero, zero),
        }
    }
}

impl std::fmt::Display for ThresholdVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One threshold per thresholded coefficient, shared across batch and
/// spatial positions; optional per-coefficient input weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdParams<S> {
    pub thresholds: Vec<S>,
    pub weights: Option<Vec<S>>,
}

impl<S: Scalar> ThresholdParams<S> {
    /// `T = 0`, and `w = 1` for the weighted variant.
    pub fn init(len: usize, variant: ThresholdVariant) -> Self {
        Self {
            thresholds: vec![S::zero(); len],
            weights: variant.is_weighted().then(|| vec![S::one(); len]),
        }
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn count(&self) -> usize {
        self.thresholds.len() + self.weights.as_ref().map_or(0, Vec::len)
    }

    fn validate(&self, expected: usize, variant: ThresholdVariant) -> Result<()> {
        if variant == ThresholdVariant::Identity {
            return Ok(());
        }
        if self.thresholds.len() != expected {
            return Err(Error::ParamLength {
                name: "thresholds",
                expected,
                actual: self.thresholds.len(),
            });
        }
        if variant.is_weighted() {
            let actual = self.weights.as_ref().map_or(0, Vec::len);
            if actual != expected {
                return Err(Error::ParamLength {
                    name: "weights",
                    expected,
                    actual,
                });
            }
        } else if let Some(w) = &self.weights {
            if w.len() != expected {
                return Err(Error::ParamLength {
                    name: "weights",
                    expected,
                    actual: w.len(),
                });
            }
        }
        Ok(())
    }
}

/// Gradient with respect to [`ThresholdParams`], same layout.
pub type ThresholdGrads<S> = ThresholdParams<S>;

fn first_coefficient(skip_dc: bool) -> usize {
    usize::from(skip_dc)
}

/// Applies `variant` to every channel; channel `j` (counting after the DC
/// channel when `skip_dc`) uses `T_j` and `w_j`.
pub fn apply_threshold<S: Scalar>(
    y: &Tensor<S>,
    params: &ThresholdParams<S>,
    variant: ThresholdVariant,
    skip_dc: bool,
) -> Result<Tensor<S>> {
    let lo = first_coefficient(skip_dc);
    let count = y.channels().saturating_sub(lo);
    params.validate(count, variant)?;
    if variant == ThresholdVariant::Identity {
        return Ok(y.clone());
    }
    let mut out = y.clone();
    for v in out.channel_vectors_mut() {
        threshold_slice(&mut v[lo..], params, variant);
    }
    Ok(out)
}

/// Thresholds `v` in place; `v[j]` uses `T_j` and `w_j`. Lengths are not checked.
#[inline]
pub(crate) fn threshold_slice<S: Scalar>(v: &mut [S], params: &ThresholdParams<S>, variant: ThresholdVariant) {
    let t = &params.thresholds[..v.len()];
    match &params.weights {
        Some(w) => {
            for ((x, &tj), &wj) in v.iter_mut().zip(t).zip(&w[..t.len()]) {
                *x = variant.eval(*x, tj, wj);
            }
        }
        None => {
            for (x, &tj) in v.iter_mut().zip(t) {
                *x = variant.eval(*x, tj, S::one());
            }
        }
    }
}

/// Replaces the upstream gradient `g` by the gradient with respect to `y`
/// and accumulates parameter gradients into `grads`.
#[inline]
pub(crate) fn threshold_slice_backward<S: Scalar>(
    y: &[S],
    g: &mut [S],
    params: &ThresholdParams<S>,
    variant: ThresholdVariant,
    grads: &mut ThresholdGrads<S>,
) {
    let one = S::one();
    for (j, (&x, gx)) in y.iter().zip(g.iter_mut()).enumerate() {
        let w = params.weights.as_ref().map_or(one, |w| w[j]);
        let (dx, dt, dw) = variant.grad(x, params.thresholds[j], w);
        let upstream = *gx;
        grads.thresholds[j] += upstream * dt;
        if let Some(gw) = grads.weights.as_mut() {
            gw[j] += upstream * dw;
        }
        *gx = upstream * dx;
    }
}

/// Backward pass of [`apply_threshold`] given the pre-threshold input `y`.
///
/// Returns the gradient with respect to `y` and the parameter gradients,
/// summed over batch and spatial positions.
pub fn apply_threshold_backward<S: Scalar>(
    y: &Tensor<S>,
    grad_out: &Tensor<S>,
    params: &ThresholdParams<S>,
    variant: ThresholdVariant,
    skip_dc: bool,
) -> Result<(Tensor<S>, ThresholdGrads<S>)> {
    grad_out.expect_shape(y.shape())?;
    let lo = first_coefficient(skip_dc);
    let count = y.channels().saturating_sub(lo);
    params.validate(count, variant)?;
    let mut grads = ThresholdGrads {
        thresholds: vec![S::zero(); params.len()],
        weights: params.weights.as_ref().map(|w| vec![S::zero(); w.len()]),
    };
    if variant == ThresholdVariant::Identity {
        return Ok((grad_out.clone(), grads));
    }
    let mut grad_in = grad_out.clone();
    for (v, g) in y.channel_vectors().zip(grad_in.channel_vectors_mut()) {
        threshold_slice_backward(&v[lo..], &mut g[lo..], params, variant, &mut grads);
    }
    Ok((grad_in, grads))
}
