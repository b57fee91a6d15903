//! Revised inverted-residual bottleneck:
//!
//! ```text
//! h × w × k       FWHT expansion, BN, ReLU6       → h × w × tk
//! h × w × tk      3×3 MF-DS-Conv (stride s), BN, ReLU6 → h/s × w/s × tk
//! h/s × w/s × tk  FWHT projection, BN, ReLU6      → h/s × w/s × k'
//! ```
//!
//! The input is added to the output when `s == 1` and `k == k'`.

use crate::error::{Error, Result};
use crate::layers::activation::{relu6_backward, relu6_tensor};
use crate::layers::batch_norm::{BatchNorm, BnCache, BnGrads};
use crate::layers::fwht_layer::{FwhtCache, FwhtLayer, FwhtLayerConfig};
use crate::layers::mf_conv::MfDsConv;
use crate::mf_ops::{MfKernel, MfVariant};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};
use crate::thresholding::{ThresholdGrads, ThresholdVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BottleneckConfig {
    pub k: usize,
    pub k_prime: usize,
    pub t: usize,
    pub s: usize,
    pub variant: ThresholdVariant,
    pub mf_variant: MfVariant,
    /// ReLU6 after the projection's batch norm.
    pub project_activation: bool,
}

impl BottleneckConfig {
    pub fn new(k: usize, k_prime: usize, t: usize, s: usize) -> Result<Self> {
        let cfg = Self {
            k,
            k_prime,
            t,
            s,
            variant: ThresholdVariant::Smooth,
            mf_variant: MfVariant::SumMag,
            project_activation: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_variant(mut self, variant: ThresholdVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_mf_variant(mut self, mf_variant: MfVariant) -> Self {
        self.mf_variant = mf_variant;
        self
    }

    pub fn with_project_activation(mut self, on: bool) -> Self {
        self.project_activation = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k_prime == 0 || self.t == 0 {
            return Err(Error::InvalidConfig(format!(
                "bottleneck channels and expansion must be positive: k={} k'={} t={}",
                self.k, self.k_prime, self.t
            )));
        }
        if self.s != 1 && self.s != 2 {
            return Err(Error::InvalidConfig(format!("stride must be 1 or 2, got {}", self.s)));
        }
        Ok(())
    }

    pub fn expanded(&self) -> usize {
        self.t * self.k
    }

    pub fn has_residual(&self) -> bool {
        self.s == 1 && self.k == self.k_prime
    }

    pub fn expand_config(&self) -> Result<FwhtLayerConfig> {
        FwhtLayerConfig::expand(self.k, self.expanded(), self.variant)
    }

    /// Projection layer; expands instead when `k' > tk`.
    pub fn project_config(&self) -> Result<FwhtLayerConfig> {
        FwhtLayerConfig::new(self.expanded(), self.k_prime, self.variant)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.c != self.k {
            return Err(Error::ChannelCount {
                expected: self.k,
                actual: input.c,
            });
        }
        Shape::new(input.n, input.h.div_ceil(self.s), input.w.div_ceil(self.s), self.k_prime)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bottleneck<S> {
    pub cfg: BottleneckConfig,
    pub expand: FwhtLayer<S>,
    pub bn1: BatchNorm<S>,
    pub depthwise: MfDsConv<S>,
    pub bn2: BatchNorm<S>,
    pub project: FwhtLayer<S>,
    pub bn3: BatchNorm<S>,
}

#[derive(Debug, Clone)]
pub struct BottleneckCache<S> {
    expand: FwhtCache<S>,
    bn1: BnCache<S>,
    pre1: Tensor<S>,
    act1: Tensor<S>,
    bn2: BnCache<S>,
    pre2: Tensor<S>,
    project: FwhtCache<S>,
    bn3: BnCache<S>,
    pre3: Tensor<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BottleneckGrads<S> {
    pub expand: ThresholdGrads<S>,
    pub bn1: BnGrads<S>,
    pub depthwise: Vec<S>,
    pub bn2: BnGrads<S>,
    pub project: ThresholdGrads<S>,
    pub bn3: BnGrads<S>,
}

impl<S: Scalar> Bottleneck<S> {
    pub fn new(cfg: BottleneckConfig, rng: &mut impl rand::Rng) -> Result<Self> {
        cfg.validate()?;
        let tk = cfg.expanded();
        let kernel = MfKernel::init(tk, cfg.s, rng)?.with_variant(cfg.mf_variant);
        Ok(Self {
            cfg,
            expand: FwhtLayer::new(cfg.expand_config()?),
            bn1: BatchNorm::new(tk),
            depthwise: MfDsConv::new(kernel),
            bn2: BatchNorm::new(tk),
            project: FwhtLayer::new(cfg.project_config()?),
            bn3: BatchNorm::new(cfg.k_prime),
        })
    }

    pub fn forward(&self, x: &Tensor<S>, training: bool) -> Result<(Tensor<S>, BottleneckCache<S>)> {
        self.cfg.output_shape(x.shape())?;
        let (e, expand) = self.expand.forward(x)?;
        let (pre1, bn1) = self.bn1.forward(&e, training)?;
        let act1 = relu6_tensor(&pre1);
        let d = self.depthwise.forward(&act1)?;
        let (pre2, bn2) = self.bn2.forward(&d, training)?;
        let act2 = relu6_tensor(&pre2);
        let (p, project) = self.project.forward(&act2)?;
        let (pre3, bn3) = self.bn3.forward(&p, training)?;
        let mut out = if self.cfg.project_activation {
            relu6_tensor(&pre3)
        } else {
            pre3.clone()
        };
        if self.cfg.has_residual() {
            out = out.add(x)?;
        }
        Ok((
            out,
            BottleneckCache {
                expand,
                bn1,
                pre1,
                act1,
                bn2,
                pre2,
                project,
                bn3,
                pre3,
            },
        ))
    }

    pub fn backward(
        &self,
        grad_out: &Tensor<S>,
        cache: &BottleneckCache<S>,
    ) -> Result<(Tensor<S>, BottleneckGrads<S>)> {
        let g3 = if self.cfg.project_activation {
            relu6_backward(&cache.pre3, grad_out)
        } else {
            grad_out.clone()
        };
        let (g, bn3) = self.bn3.backward(&g3, &cache.bn3)?;
        let (g, project) = self.project.backward(&g, &cache.project)?;
        let g = relu6_backward(&cache.pre2, &g);
        let (g, bn2) = self.bn2.backward(&g, &cache.bn2)?;
        let (g, depthwise) = self.depthwise.backward(&cache.act1, &g)?;
        let g = relu6_backward(&cache.pre1, &g);
        let (g, bn1) = self.bn1.backward(&g, &cache.bn1)?;
        let (mut grad_in, expand) = self.expand.backward(&g, &cache.expand)?;
        if self.cfg.has_residual() {
            grad_in = grad_in.add(grad_out)?;
        }
        Ok((
            grad_in,
            BottleneckGrads {
                expand,
                bn1,
                depthwise,
                bn2,
                project,
                bn3,
            },
        ))
    }

    pub fn update_running(&mut self, cache: &BottleneckCache<S>) {
        self.bn1.update_running(&cache.bn1);
        self.bn2.update_running(&cache.bn2);
        self.bn3.update_running(&cache.bn3);
    }

    pub fn param_count(&self) -> usize {
        self.expand.param_count()
            + self.bn1.param_count()
            + self.depthwise.param_count()
            + self.bn2.param_count()
            + self.project.param_count()
            + self.bn3.param_count()
    }

    /// Trainable parameter vectors, named, in a fixed order shared with
    /// [`BottleneckGrads::named`]. Empty vectors are skipped.
    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Vec<S>)> {
        let mut out: Vec<(&'static str, &mut Vec<S>)> = Vec::new();
        out.push(("expand.thresholds", &mut self.expand.params.thresholds));
        if let Some(w) = self.expand.params.weights.as_mut() {
            out.push(("expand.weights", w));
        }
        out.push(("bn1.gamma", &mut self.bn1.gamma));
        out.push(("bn1.beta", &mut self.bn1.beta));
        out.push(("depthwise.weights", &mut self.depthwise.kernel.weights));
        out.push(("bn2.gamma", &mut self.bn2.gamma));
        out.push(("bn2.beta", &mut self.bn2.beta));
        out.push(("project.thresholds", &mut self.project.params.thresholds));
        if let Some(w) = self.project.params.weights.as_mut() {
            out.push(("project.weights", w));
        }
        out.push(("bn3.gamma", &mut self.bn3.gamma));
        out.push(("bn3.beta", &mut self.bn3.beta));
        out.retain(|(_, v)| !v.is_empty());
        out
    }

    /// Read-only view in the order of [`Bottleneck::params_mut`].
    pub fn params(&self) -> Vec<(&'static str, &[S])> {
        let mut out: Vec<(&'static str, &[S])> = Vec::new();
        out.push(("expand.thresholds", &self.expand.params.thresholds));
        if let Some(w) = &self.expand.params.weights {
            out.push(("expand.weights", w));
        }
        out.push(("bn1.gamma", &self.bn1.gamma));
        out.push(("bn1.beta", &self.bn1.beta));
        out.push(("depthwise.weights", &self.depthwise.kernel.weights));
        out.push(("bn2.gamma", &self.bn2.gamma));
        out.push(("bn2.beta", &self.bn2.beta));
        out.push(("project.thresholds", &self.project.params.thresholds));
        if let Some(w) = &self.project.params.weights {
            out.push(("project.weights", w));
        }
        out.push(("bn3.gamma", &self.bn3.gamma));
        out.push(("bn3.beta", &self.bn3.beta));
        out.retain(|(_, v)| !v.is_empty());
        out
    }

    pub fn buffers(&self) -> Vec<(&'static str, &[S])> {
        vec![
            ("bn1.running_mean", &self.bn1.running_mean),
            ("bn1.running_var", &self.bn1.running_var),
            ("bn2.running_mean", &self.bn2.running_mean),
            ("bn2.running_var", &self.bn2.running_var),
            ("bn3.running_mean", &self.bn3.running_mean),
            ("bn3.running_var", &self.bn3.running_var),
        ]
    }

    /// Batch-norm running statistics.
    pub fn buffers_mut(&mut self) -> Vec<(&'static str, &mut Vec<S>)> {
        vec![
            ("bn1.running_mean", &mut self.bn1.running_mean),
            ("bn1.running_var", &mut self.bn1.running_var),
            ("bn2.running_mean", &mut self.bn2.running_mean),
            ("bn2.running_var", &mut self.bn2.running_var),
            ("bn3.running_mean", &mut self.bn3.running_mean),
            ("bn3.running_var", &mut self.bn3.running_var),
        ]
    }
}

impl<S: Scalar> BottleneckGrads<S> {
    /// Same order and names as [`Bottleneck::params_mut`].
    pub fn named(&self) -> Vec<(&'static str, &[S])> {
        let mut out: Vec<(&'static str, &[S])> = Vec::new();
        out.push(("expand.thresholds", &self.expand.thresholds));
        if let Some(w) = &self.expand.weights {
            out.push(("expand.weights", w));
        }
        out.push(("bn1.gamma", &self.bn1.gamma));
        out.push(("bn1.beta", &self.bn1.beta));
        out.push(("depthwise.weights", &self.depthwise));
        out.push(("bn2.gamma", &self.bn2.gamma));
        out.push(("bn2.beta", &self.bn2.beta));
        out.push(("project.thresholds", &self.project.thresholds));
        if let Some(w) = &self.project.weights {
            out.push(("project.weights", w));
        }
        out.push(("bn3.gamma", &self.bn3.gamma));
        out.push(("bn3.beta", &self.bn3.beta));
        out.retain(|(_, v)| !v.is_empty());
        out
    }
}
