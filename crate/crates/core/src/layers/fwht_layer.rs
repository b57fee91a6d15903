//! Channel expansion and projection through the Walsh-Hadamard domain.
//!
//! Expansion (`in <= out`), with `D = 2^d >= out`:
//! pad to `D` → transform → threshold all but the DC coefficient →
//! transform → keep the first `out` channels.
//!
//! Projection (`in > out`), with `P = 2^p >= in`, `Q = 2^q >= out`, `r = P/Q`:
//! pad to `P` → transform → threshold coefficients `1..=P−r` → average-pool
//! them in groups of `r` → prepend `DC / r` → `Q`-point transform → keep the
//! first `out` channels. The last `r − 1` coefficients are discarded.
//!
//! Every transform is orthonormal (`1/√size`), so a pass through both
//! transforms with thresholding disabled is an exact inverse pair for
//! expansion and carries the `1/√(PQ)` factor for projection.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::thresholding::{
    threshold_slice, threshold_slice_backward, ThresholdGrads, ThresholdParams, ThresholdVariant,
};
use crate::wht::{fwht_vector, sequency_permutation, Ordering, Scaling, TransformPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Expand,
    Project,
}

/// Sizes derived from the channel counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSizes {
    /// `2^d`.
    Expand { size: usize },
    /// `2^p`, `2^q` and `r = 2^(p−q)`.
    Project { p_size: usize, q_size: usize, r: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FwhtLayerConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub variant: ThresholdVariant,
    pub ordering: Ordering,
    direction: Direction,
}

impl FwhtLayerConfig {
    /// Direction is `Expand` iff `out >= in`.
    pub fn new(in_channels: usize, out_channels: usize, variant: ThresholdVariant) -> Result<Self> {
        let direction = if out_channels >= in_channels {
            Direction::Expand
        } else {
            Direction::Project
        };
        Self::with_direction(in_channels, out_channels, variant, direction)
    }

    pub fn expand(in_channels: usize, out_channels: usize, variant: ThresholdVariant) -> Result<Self> {
        Self::with_direction(in_channels, out_channels, variant, Direction::Expand)
    }

    pub fn project(in_channels: usize, out_channels: usize, variant: ThresholdVariant) -> Result<Self> {
        Self::with_direction(in_channels, out_channels, variant, Direction::Project)
    }

    fn with_direction(
        in_channels: usize,
        out_channels: usize,
        variant: ThresholdVariant,
        direction: Direction,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidConfig("channel counts must be positive".into()));
        }
        match direction {
            Direction::Expand if in_channels > out_channels => {
                return Err(Error::InvalidConfig(format!(
                    "expansion needs in <= out, got {in_channels} -> {out_channels}"
                )))
            }
            Direction::Project if in_channels < out_channels => {
                return Err(Error::InvalidConfig(format!(
                    "projection needs in >= out, got {in_channels} -> {out_channels}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            in_channels,
            out_channels,
            variant,
            ordering: Ordering::Natural,
            direction,
        })
    }

    pub fn with_ordering(mut self, ordering: Ordering) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn sizes(&self) -> LayerSizes {
        match self.direction {
            Direction::Expand => LayerSizes::Expand {
                size: self.out_channels.next_power_of_two(),
            },
            Direction::Project => {
                let p_size = self.in_channels.next_power_of_two();
                let q_size = self.out_channels.next_power_of_two();
                LayerSizes::Project {
                    p_size,
                    q_size,
                    r: p_size / q_size,
                }
            }
        }
    }

    /// Number of thresholded transform coefficients: `2^d − 1` or `2^p − r`.
    pub fn threshold_count(&self) -> usize {
        match self.sizes() {
            LayerSizes::Expand { size } => size - 1,
            LayerSizes::Project { p_size, r, .. } => p_size - r,
        }
    }

    /// Trainable scalars: one threshold per thresholded coefficient, doubled
    /// by the weighted variant; none for `Identity`.
    pub fn param_count(&self) -> usize {
        match self.variant {
            ThresholdVariant::Identity => 0,
            v => self.threshold_count() * v.params_per_coefficient(),
        }
    }

    fn plan(&self, size: usize) -> TransformPlan {
        TransformPlan::new(size, self.ordering, Scaling::Orthonormal)
            .expect("layer sizes are powers of two")
    }

    fn check_params<S: Scalar>(&self, params: &ThresholdParams<S>) -> Result<()> {
        if self.variant == ThresholdVariant::Identity {
            return Ok(());
        }
        let expected = self.threshold_count();
        if params.thresholds.len() != expected {
            return Err(Error::ParamLength {
                name: "thresholds",
                expected,
                actual: params.thresholds.len(),
            });
        }
        Ok(())
    }
}

/// Forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct FwhtCache<S> {
    /// Transform-domain tensor before thresholding (size `2^d` or `2^p`).
    pub coefficients: Tensor<S>,
}

/// Expansion forward pass.
pub fn fwht_expand_forward<S: Scalar>(
    x: &Tensor<S>,
    cfg: &FwhtLayerConfig,
    params: &ThresholdParams<S>,
) -> Result<Tensor<S>> {
    expand_forward(x, cfg, params).map(|(z, _)| z)
}

/// Projection forward pass.
pub fn fwht_project_forward<S: Scalar>(
    x: &Tensor<S>,
    cfg: &FwhtLayerConfig,
    params: &ThresholdParams<S>,
) -> Result<Tensor<S>> {
    project_forward(x, cfg, params).map(|(z, _)| z)
}

/// Per-size transform plan with its permutation and scratch.
struct Transformer<S> {
    plan: TransformPlan,
    perm: Vec<usize>,
    scratch: Vec<S>,
}

impl<S: Scalar> Transformer<S> {
    fn new(cfg: &FwhtLayerConfig, size: usize) -> Self {
        let plan = cfg.plan(size);
        let perm = match plan.ordering() {
            Ordering::Natural => Vec::new(),
            Ordering::Sequency => sequency_permutation(plan.log2()),
        };
        Self { plan, perm, scratch: vec![S::zero(); size] }
    }

    fn apply(&mut self, v: &mut [S]) {
        fwht_vector(v, &self.plan, &self.perm, &mut self.scratch);
    }
}

fn load<S: Scalar>(buf: &mut [S], src: &[S]) {
    buf[..src.len()].copy_from_slice(src);
    buf[src.len()..].iter_mut().for_each(|v| *v = S::zero());
}

fn expand_forward<S: Scalar>(
    x: &Tensor<S>,
    cfg: &FwhtLayerConfig,
    params: &ThresholdParams<S>,
) -> Result<(Tensor<S>, FwhtCache<S>)> {
    let LayerSizes::Expand { size } = cfg.sizes() else {
        return Err(Error::InvalidConfig("layer is configured for projection".into()));
    };
    x.expect_channels(cfg.in_channels)?;
    cfg.check_params(params)?;
    let mut t = Transformer::new(cfg, size);
    let mut y = Tensor::zeros(x.shape().with_channels(size)?);
    let mut z = Tensor::zeros(x.shape().with_channels(cfg.out_channels)?);
    let mut buf = vec![S::zero(); size];
    let rows = x.channel_vectors().zip(y.channel_vectors_mut()).zip(z.channel_vectors_mut());
    for ((xv, yv), zv) in rows {
        load(&mut buf, xv);
        t.apply(&mut buf);
        yv.copy_from_slice(&buf);
        if cfg.variant != ThresholdVariant::Identity {
            threshold_slice(&mut buf[1..], params, cfg.variant);
        }
        t.apply(&mut buf);
        zv.copy_from_slice(&buf[..cfg.out_channels]);
    }
    Ok((z, FwhtCache { coefficients: y }))
}

fn project_forward<S: Scalar>(
    x: &Tensor<S>,
    cfg: &FwhtLayerConfig,
    params: &ThresholdParams<S>,
) -> Result<(Tensor<S>, FwhtCache<S>)> {
    let LayerSizes::Project { p_size, q_size, r } = cfg.sizes() else {
        return Err(Error::InvalidConfig("layer is configured for expansion".into()));
    };
    x.expect_channels(cfg.in_channels)?;
    cfg.check_params(params)?;
    let mut tp = Transformer::new(cfg, p_size);
    let mut tq = Transformer::new(cfg, q_size);
    let inv_r = S::one() / S::from_count(r);
    let mut y = Tensor::zeros(x.shape().with_channels(p_size)?);
    let mut z = Tensor::zeros(x.shape().with_channels(cfg.out_channels)?);
    let mut buf = vec![S::zero(); p_size];
    let mut q = vec![S::zero(); q_size];
    let rows = x.channel_vectors().zip(y.channel_vectors_mut()).zip(z.channel_vectors_mut());
    for ((xv, yv), zv) in rows {
        load(&mut buf, xv);
        tp.apply(&mut buf);
        yv.copy_from_slice(&buf);
        let kept = &mut buf[1..p_size - r + 1];
        if cfg.variant != ThresholdVariant::Identity {
            threshold_slice(kept, params, cfg.variant);
        }
        q[0] = yv[0] * inv_r;
        for (qj, group) in q[1..].iter_mut().zip(kept.chunks_exact(r)) {
            *qj = group.iter().fold(S::zero(), |acc, &v| acc + v) * inv_r;
        }
        tq.apply(&mut q);
        zv.copy_from_slice(&q[..cfg.out_channels]);
    }
    Ok((z, FwhtCache { coefficients: y }))
}

/// An FWHT layer: configuration plus its trainable thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct FwhtLayer<S> {
    pub cfg: FwhtLayerConfig,
    pub params: ThresholdParams<S>,
}

impl<S: Scalar> FwhtLayer<S> {
    /// Thresholds start at zero (weights at one for the weighted variant).
    pub fn new(cfg: FwhtLayerConfig) -> Self {
        let len = match cfg.variant {
            ThresholdVariant::Identity => 0,
            _ => cfg.threshold_count(),
        };
        Self {
            cfg,
            params: ThresholdParams::init(len, cfg.variant),
        }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<(Tensor<S>, FwhtCache<S>)> {
        match self.cfg.direction {
            Direction::Expand => expand_forward(x, &self.cfg, &self.params),
            Direction::Project => project_forward(x, &self.cfg, &self.params),
        }
    }

    pub fn backward(
        &self,
        grad_out: &Tensor<S>,
        cache: &FwhtCache<S>,
    ) -> Result<(Tensor<S>, ThresholdGrads<S>)> {
        fwht_layer_backward(grad_out, cache, &self.cfg, &self.params)
    }

    pub fn param_count(&self) -> usize {
        self.cfg.param_count()
    }
}

/// Adjoint chain of the forward pass. Transforms are symmetric, so each is its
/// own adjoint; pad and slice are mutual adjoints; the pooling adjoint spreads
/// `g / r` over each group.
pub fn fwht_layer_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    cache: &FwhtCache<S>,
    cfg: &FwhtLayerConfig,
    params: &ThresholdParams<S>,
) -> Result<(Tensor<S>, ThresholdGrads<S>)> {
    let y = &cache.coefficients;
    let positions = y.shape().with_channels(cfg.out_channels)?;
    grad_out.expect_shape(positions)?;
    let thresholded = cfg.variant != ThresholdVariant::Identity;
    let mut grads = ThresholdGrads {
        thresholds: vec![S::zero(); params.len()],
        weights: params.weights.as_ref().map(|w| vec![S::zero(); w.len()]),
    };
    let mut g_x = Tensor::zeros(y.shape().with_channels(cfg.in_channels)?);
    let rows = y.channel_vectors().zip(grad_out.channel_vectors()).zip(g_x.channel_vectors_mut());
    match cfg.sizes() {
        LayerSizes::Expand { size } => {
            y.expect_channels(size)?;
            let mut t = Transformer::new(cfg, size);
            let mut buf = vec![S::zero(); size];
            for ((yv, gv), gxv) in rows {
                load(&mut buf, gv);
                t.apply(&mut buf);
                if thresholded {
                    threshold_slice_backward(&yv[1..], &mut buf[1..], params, cfg.variant, &mut grads);
                }
                t.apply(&mut buf);
                gxv.copy_from_slice(&buf[..cfg.in_channels]);
            }
        }
        LayerSizes::Project { p_size, q_size, r } => {
            y.expect_channels(p_size)?;
            let mut tp = Transformer::new(cfg, p_size);
            let mut tq = Transformer::new(cfg, q_size);
            let inv_r = S::one() / S::from_count(r);
            let mut buf = vec![S::zero(); p_size];
            let mut q = vec![S::zero(); q_size];
            let kept = 1..p_size - r + 1;
            for ((yv, gv), gxv) in rows {
                load(&mut q, gv);
                tq.apply(&mut q);
                buf[0] = q[0] * inv_r;
                for (&qj, group) in q[1..].iter().zip(buf[kept.clone()].chunks_exact_mut(r)) {
                    group.iter_mut().for_each(|g| *g = qj * inv_r);
                }
                buf[kept.end..].iter_mut().for_each(|g| *g = S::zero());
                if thresholded {
                    threshold_slice_backward(
                        &yv[kept.clone()],
                        &mut buf[kept.clone()],
                        params,
                        cfg.variant,
                        &mut grads,
                    );
                }
                tp.apply(&mut buf);
                gxv.copy_from_slice(&buf[..cfg.in_channels]);
            }
        }
    }
    Ok((g_x, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn derived_sizes() {
        let e = FwhtLayerConfig::new(3, 6, ThresholdVariant::Smooth).unwrap();
        assert_eq!(e.direction(), Direction::Expand);
        assert_eq!(e.sizes(), LayerSizes::Expand { size: 8 });
        assert_eq!(e.threshold_count(), 7);
        let p = FwhtLayerConfig::new(6, 3, ThresholdVariant::Smooth).unwrap();
        assert_eq!(p.sizes(), LayerSizes::Project { p_size: 8, q_size: 4, r: 2 });
        assert_eq!(p.threshold_count(), 6);
        let big = FwhtLayerConfig::new(160, 1024, ThresholdVariant::Smooth).unwrap();
        assert_eq!(big.param_count(), 1023);
        let w = FwhtLayerConfig::new(160, 1024, ThresholdVariant::WeightedSmooth).unwrap();
        assert_eq!(w.param_count(), 2046);
    }

    #[test]
    fn direction_is_validated() {
        assert!(FwhtLayerConfig::expand(8, 4, ThresholdVariant::Smooth).is_err());
        assert!(FwhtLayerConfig::project(4, 8, ThresholdVariant::Smooth).is_err());
        assert!(FwhtLayerConfig::new(0, 8, ThresholdVariant::Smooth).is_err());
        let same = FwhtLayerConfig::project(8, 8, ThresholdVariant::Smooth).unwrap();
        assert_eq!(same.sizes(), LayerSizes::Project { p_size: 8, q_size: 8, r: 1 });
    }

    #[test]
    fn expand_shapes() {
        let layer = FwhtLayer::<f32>::new(FwhtLayerConfig::new(3, 6, ThresholdVariant::Smooth).unwrap());
        let x = Tensor::<f32>::zeros(Shape::new(2, 3, 3, 3).unwrap());
        let (z, cache) = layer.forward(&x).unwrap();
        assert_eq!(z.shape().dims(), [2, 3, 3, 6]);
        assert_eq!(cache.coefficients.channels(), 8);
    }

    #[test]
    fn project_shapes() {
        let layer = FwhtLayer::<f32>::new(FwhtLayerConfig::new(6, 3, ThresholdVariant::Smooth).unwrap());
        let x = Tensor::<f32>::zeros(Shape::new(2, 3, 3, 6).unwrap());
        let (z, _) = layer.forward(&x).unwrap();
        assert_eq!(z.shape().dims(), [2, 3, 3, 3]);
    }

    #[test]
    fn project_to_single_channel_keeps_only_dc() {
        let cfg = FwhtLayerConfig::new(4, 1, ThresholdVariant::Smooth).unwrap();
        assert_eq!(cfg.threshold_count(), 0);
        let layer = FwhtLayer::<f64>::new(cfg);
        let x = Tensor::vector(&[1.0, 2.0, 3.0, 6.0]).unwrap();
        let (z, _) = layer.forward(&x).unwrap();
        // DC = 12/2, divided by r = 4, single-point transform.
        assert!((z.data()[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn wrong_param_length_is_rejected() {
        let cfg = FwhtLayerConfig::new(3, 6, ThresholdVariant::Smooth).unwrap();
        let bad = ThresholdParams::<f32>::init(6, ThresholdVariant::Smooth);
        let x = Tensor::<f32>::zeros(Shape::new(1, 1, 1, 3).unwrap());
        assert!(matches!(
            fwht_expand_forward(&x, &cfg, &bad),
            Err(Error::ParamLength { expected: 7, actual: 6, .. })
        ));
        assert!(fwht_project_forward(&x, &cfg, &bad).is_err());
        let wrong_in = Tensor::<f32>::zeros(Shape::new(1, 1, 1, 4).unwrap());
        let ok = ThresholdParams::init(7, ThresholdVariant::Smooth);
        assert!(fwht_expand_forward(&wrong_in, &cfg, &ok).is_err());
    }
}
