//! Multiply-based layers around the hadanet blocks: the stem convolution,
//! pointwise and dense layers, pooling, dropout and the conv-twin bottleneck.

use hadanet::layers::{relu6_backward, relu6_tensor, BatchNorm, BnCache, BottleneckConfig};
use hadanet::mf_ops::{depthwise_conv, depthwise_conv_backward, ConvGeometry, MfKernel, Padding, KERNEL};
use hadanet::{Shape, Tensor};
use rand::Rng;

use crate::error::Result;
use crate::real::Real;

fn uniform<S: Real>(rng: &mut impl Rng, len: usize, bound: f64) -> Vec<S> {
    (0..len).map(|_| S::lit(rng.gen_range(-bound..=bound))).collect()
}

/// Standard 3×3 convolution with same padding and no bias.
///
/// Weights are `(ky, kx, in, out)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3<S> {
    pub weights: Vec<S>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
}

impl<S: Real> Conv3x3<S> {
    pub fn init(in_channels: usize, out_channels: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let fan_in = KERNEL * KERNEL * in_channels;
        Self {
            weights: uniform(rng, fan_in * out_channels, 1.0 / (fan_in as f64).sqrt()),
            in_channels,
            out_channels,
            stride,
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let g = ConvGeometry::new(input.h, input.w, self.stride, Padding::Same)?;
        Ok(Shape::new(input.n, g.out_h, g.out_w, self.out_channels)?)
    }

    /// Calls `f(input_offset, weight_row, output_offset)` per tap.
    fn sweep(&self, input: Shape, mut f: impl FnMut(usize, usize, usize)) -> Result<Shape> {
        let g = ConvGeometry::new(input.h, input.w, self.stride, Padding::Same)?;
        let out = self.output_shape(input)?;
        for n in 0..input.n {
            for oi in 0..out.h {
                for oj in 0..out.w {
                    let o = out.index(n, oi, oj, 0);
                    for ky in 0..KERNEL {
                        let Some(ii) = g.source(oi, ky, g.pad_top, input.h) else {
                            continue;
                        };
                        for kx in 0..KERNEL {
                            let Some(jj) = g.source(oj, kx, g.pad_left, input.w) else {
                                continue;
                            };
                            let row = (ky * KERNEL + kx) * self.in_channels;
                            f(input.index(n, ii, jj, 0), row, o);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.expect_channels(self.in_channels)?;
        let (cin, cout) = (self.in_channels, self.out_channels);
        let mut out = Tensor::zeros(self.output_shape(x.shape())?);
        let (xs, w) = (x.data(), &self.weights);
        let acc = out.data_mut();
        self.sweep(x.shape(), |i, row, o| {
            for ci in 0..cin {
                let xv = xs[i + ci];
                let wr = &w[(row + ci) * cout..(row + ci + 1) * cout];
                for (a, &wv) in acc[o..o + cout].iter_mut().zip(wr) {
                    *a += xv * wv;
                }
            }
        })?;
        Ok(out)
    }

    /// `(grad_input, grad_weights)`.
    pub fn backward(&self, x: &Tensor<S>, grad_out: &Tensor<S>) -> Result<(Tensor<S>, Vec<S>)> {
        grad_out.expect_shape(self.output_shape(x.shape())?)?;
        let (cin, cout) = (self.in_channels, self.out_channels);
        let mut grad_in = Tensor::zeros(x.shape());
        let mut grad_w = vec![S::zero(); self.weights.len()];
        let (xs, gs, w) = (x.data(), grad_out.data(), &self.weights);
        let gi = grad_in.data_mut();
        self.sweep(x.shape(), |i, row, o| {
            let g = &gs[o..o + cout];
            for ci in 0..cin {
                let xv = xs[i + ci];
                let r = (row + ci) * cout;
                let mut acc = S::zero();
                for ((gw, &wv), &gv) in grad_w[r..r + cout].iter_mut().zip(&w[r..r + cout]).zip(g) {
                    *gw += xv * gv;
                    acc += wv * gv;
                }
                gi[i + ci] += acc;
            }
        })?;
        Ok((grad_in, grad_w))
    }
}

/// 1×1 convolution without bias; weights are `(in, out)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Pointwise<S> {
    pub weights: Vec<S>,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl<S: Real> Pointwise<S> {
    pub fn init(in_channels: usize, out_channels: usize, rng: &mut impl Rng) -> Self {
        Self {
            weights: uniform(rng, in_channels * out_channels, 1.0 / (in_channels as f64).sqrt()),
            in_channels,
            out_channels,
        }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.expect_channels(self.in_channels)?;
        let shape = x.shape().with_channels(self.out_channels)?;
        let mut out = Tensor::zeros(shape);
        S::gemm(
            shape.positions(),
            self.in_channels,
            self.out_channels,
            x.data(),
            false,
            &self.weights,
            false,
            S::zero(),
            out.data_mut(),
        );
        Ok(out)
    }

    /// `(grad_input, grad_weights)`.
    pub fn backward(&self, x: &Tensor<S>, grad_out: &Tensor<S>) -> Result<(Tensor<S>, Vec<S>)> {
        let p = x.shape().positions();
        grad_out.expect_shape(x.shape().with_channels(self.out_channels)?)?;
        let mut grad_in = Tensor::zeros(x.shape());
        S::gemm(
            p,
            self.out_channels,
            self.in_channels,
            grad_out.data(),
            false,
            &self.weights,
            true,
            S::zero(),
            grad_in.data_mut(),
        );
        let mut grad_w = vec![S::zero(); self.weights.len()];
        S::gemm(
            self.in_channels,
            p,
            self.out_channels,
            x.data(),
            true,
            grad_out.data(),
            false,
            S::zero(),
            &mut grad_w,
        );
        Ok((grad_in, grad_w))
    }
}

/// Fully connected layer on `batch × in` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<S> {
    pub weights: Vec<S>,
    pub bias: Vec<S>,
    pub inputs: usize,
    pub outputs: usize,
}

impl<S: Real> Dense<S> {
    pub fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weights: uniform(rng, inputs * outputs, bound),
            bias: uniform(rng, outputs, bound),
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, x: &[S], batch: usize) -> Vec<S> {
        let mut out: Vec<S> = (0..batch).flat_map(|_| self.bias.iter().copied()).collect();
        S::gemm(batch, self.inputs, self.outputs, x, false, &self.weights, false, S::one(), &mut out);
        out
    }

    /// `(grad_input, grad_weights, grad_bias)`.
    pub fn backward(&self, x: &[S], grad_out: &[S], batch: usize) -> (Vec<S>, Vec<S>, Vec<S>) {
        let mut grad_in = vec![S::zero(); batch * self.inputs];
        S::gemm(batch, self.outputs, self.inputs, grad_out, false, &self.weights, true, S::zero(), &mut grad_in);
        let mut grad_w = vec![S::zero(); self.weights.len()];
        S::gemm(self.inputs, batch, self.outputs, x, true, grad_out, false, S::zero(), &mut grad_w);
        let mut grad_b = vec![S::zero(); self.outputs];
        for row in grad_out.chunks_exact(self.outputs) {
            for (b, &g) in grad_b.iter_mut().zip(row) {
                *b += g;
            }
        }
        (grad_in, grad_w, grad_b)
    }
}

/// Mean over the spatial axes: `(n, h, w, c)` → `n × c`.
pub fn global_avg_pool<S: Real>(x: &Tensor<S>) -> Vec<S> {
    let s = x.shape();
    let mut out = vec![S::zero(); s.n * s.c];
    let per = S::from_count(s.h * s.w);
    for (p, v) in x.channel_vectors().enumerate() {
        let n = p / (s.h * s.w);
        for (o, &e) in out[n * s.c..(n + 1) * s.c].iter_mut().zip(v) {
            *o += e;
        }
    }
    out.iter_mut().for_each(|o| *o /= per);
    out
}

pub fn global_avg_pool_backward<S: Real>(grad: &[S], shape: Shape) -> Tensor<S> {
    let per = S::from_count(shape.h * shape.w);
    let mut out = Tensor::zeros(shape);
    for (p, v) in out.channel_vectors_mut().enumerate() {
        let n = p / (shape.h * shape.w);
        for (e, &g) in v.iter_mut().zip(&grad[n * shape.c..(n + 1) * shape.c]) {
            *e = g / per;
        }
    }
    out
}

/// Inverted dropout mask: kept entries are scaled by `1 / (1 − rate)`.
pub fn dropout_mask<S: Real>(len: usize, rate: f64, rng: &mut impl Rng) -> Vec<S> {
    let keep = S::lit(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { S::zero() } else { keep })
        .collect()
}

/// The multiply-based twin of the revised bottleneck: pointwise expand,
/// standard depthwise 3×3, pointwise project, with the same normalization,
/// activations and residual rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBottleneck<S> {
    pub cfg: BottleneckConfig,
    pub expand: Pointwise<S>,
    pub bn1: BatchNorm<S>,
    pub depthwise: MfKernel<S>,
    pub bn2: BatchNorm<S>,
    pub project: Pointwise<S>,
    pub bn3: BatchNorm<S>,
}

#[derive(Debug, Clone)]
pub struct ConvBottleneckCache<S> {
    bn1: BnCache<S>,
    pre1: Tensor<S>,
    act1: Tensor<S>,
    bn2: BnCache<S>,
    pre2: Tensor<S>,
    act2: Tensor<S>,
    bn3: BnCache<S>,
    pre3: Tensor<S>,
}

impl<S: Real> ConvBottleneck<S> {
    pub fn new(cfg: BottleneckConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let tk = cfg.expanded();
        Ok(Self {
            cfg,
            expand: Pointwise::init(cfg.k, tk, rng),
            bn1: BatchNorm::new(tk),
            depthwise: MfKernel::init(tk, cfg.s, rng)?,
            bn2: BatchNorm::new(tk),
            project: Pointwise::init(tk, cfg.k_prime, rng),
            bn3: BatchNorm::new(cfg.k_prime),
        })
    }

    pub fn forward(&self, x: &Tensor<S>, training: bool) -> Result<(Tensor<S>, ConvBottleneckCache<S>)> {
        self.cfg.output_shape(x.shape())?;
        let e = self.expand.forward(x)?;
        let (pre1, bn1) = self.bn1.forward(&e, training)?;
        let act1 = relu6_tensor(&pre1);
        let d = depthwise_conv(&act1, &self.depthwise)?;
        let (pre2, bn2) = self.bn2.forward(&d, training)?;
        let act2 = relu6_tensor(&pre2);
        let p = self.project.forward(&act2)?;
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
            ConvBottleneckCache {
                bn1,
                pre1,
                act1,
                bn2,
                pre2,
                act2,
                bn3,
                pre3,
            },
        ))
    }

    /// Input gradient and parameter gradients in [`ConvBottleneck::params`] order.
    pub fn backward(
        &self,
        x: &Tensor<S>,
        grad_out: &Tensor<S>,
        cache: &ConvBottleneckCache<S>,
    ) -> Result<(Tensor<S>, Vec<Vec<S>>)> {
        let g3 = if self.cfg.project_activation {
            relu6_backward(&cache.pre3, grad_out)
        } else {
            grad_out.clone()
        };
        let (g, bn3) = self.bn3.backward(&g3, &cache.bn3)?;
        let (g, project) = self.project.backward(&cache.act2, &g)?;
        let g = relu6_backward(&cache.pre2, &g);
        let (g, bn2) = self.bn2.backward(&g, &cache.bn2)?;
        let (g, depthwise) = depthwise_conv_backward(&cache.act1, &self.depthwise, &g)?;
        let g = relu6_backward(&cache.pre1, &g);
        let (g, bn1) = self.bn1.backward(&g, &cache.bn1)?;
        let (mut grad_in, expand) = self.expand.backward(x, &g)?;
        if self.cfg.has_residual() {
            grad_in = grad_in.add(grad_out)?;
        }
        let grads = vec![
            expand, bn1.gamma, bn1.beta, depthwise, bn2.gamma, bn2.beta, project, bn3.gamma, bn3.beta,
        ];
        Ok((grad_in, grads))
    }

    pub fn update_running(&mut self, cache: &ConvBottleneckCache<S>) {
        self.bn1.update_running(&cache.bn1);
        self.bn2.update_running(&cache.bn2);
        self.bn3.update_running(&cache.bn3);
    }

    pub fn params(&self) -> Vec<(&'static str, &[S])> {
        vec![
            ("expand.weights", &self.expand.weights),
            ("bn1.gamma", &self.bn1.gamma),
            ("bn1.beta", &self.bn1.beta),
            ("depthwise.weights", &self.depthwise.weights),
            ("bn2.gamma", &self.bn2.gamma),
            ("bn2.beta", &self.bn2.beta),
            ("project.weights", &self.project.weights),
            ("bn3.gamma", &self.bn3.gamma),
            ("bn3.beta", &self.bn3.beta),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Vec<S>)> {
        vec![
            ("expand.weights", &mut self.expand.weights),
            ("bn1.gamma", &mut self.bn1.gamma),
            ("bn1.beta", &mut self.bn1.beta),
            ("depthwise.weights", &mut self.depthwise.weights),
            ("bn2.gamma", &mut self.bn2.gamma),
            ("bn2.beta", &mut self.bn2.beta),
            ("project.weights", &mut self.project.weights),
            ("bn3.gamma", &mut self.bn3.gamma),
            ("bn3.beta", &mut self.bn3.beta),
        ]
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

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, v)| v.len()).sum()
    }
}
