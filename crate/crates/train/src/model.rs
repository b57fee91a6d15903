//! Toy-scale classifiers: stem conv → bottleneck blocks → global average
//! pool → dropout → dense head.

use hadanet::layers::{relu6_backward, relu6_tensor, BatchNorm, BnCache, Bottleneck, BottleneckCache, BottleneckConfig};
use hadanet::thresholding::ThresholdVariant;
use hadanet::{Shape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TrainError};
use crate::nn::{
    dropout_mask, global_avg_pool, global_avg_pool_backward, Conv3x3, ConvBottleneck, ConvBottleneckCache, Dense,
};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Bottlenecks built from FWHT layers and MF depthwise convolutions.
    ToyFwht,
    /// The same network with 1×1 convolutions and standard depthwise convolutions.
    ToyConv,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::ToyFwht => "toy-fwht",
            ModelKind::ToyConv => "toy-conv",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [ModelKind::ToyFwht, ModelKind::ToyConv].into_iter().find(|k| k.name() == name)
    }

    /// Layer kind recorded for each block in checkpoints.
    pub fn block_kind(self) -> &'static str {
        match self {
            ModelKind::ToyFwht => "fwht-bottleneck",
            ModelKind::ToyConv => "conv-bottleneck",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub k: usize,
    pub k_prime: usize,
    pub s: usize,
}

pub const TOY_STEM_CHANNELS: usize = 8;
pub const TOY_EXPANSION: usize = 4;
pub const TOY_BLOCKS: [BlockSpec; 3] = [
    BlockSpec { k: 8, k_prime: 32, s: 2 },
    BlockSpec { k: 32, k_prime: 64, s: 1 },
    BlockSpec { k: 64, k_prime: 128, s: 1 },
];
pub const DROPOUT_RATE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub variant: ThresholdVariant,
    pub input_channels: usize,
    pub stem_channels: usize,
    pub stem_stride: usize,
    pub expansion: usize,
    pub blocks: Vec<BlockSpec>,
    pub classes: usize,
    pub dropout: f64,
}

impl ModelSpec {
    /// The desk-scale network for 28×28 grayscale inputs and 10 classes.
    pub fn toy(kind: ModelKind, variant: ThresholdVariant) -> Self {
        Self {
            kind,
            variant,
            input_channels: 1,
            stem_channels: TOY_STEM_CHANNELS,
            stem_stride: 2,
            expansion: TOY_EXPANSION,
            blocks: TOY_BLOCKS.to_vec(),
            classes: 10,
            dropout: DROPOUT_RATE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(TrainError::Config(m));
        if self.input_channels == 0 || self.stem_channels == 0 || self.stem_stride == 0 || self.expansion == 0 {
            return fail("channel counts, stride and expansion must be positive".into());
        }
        if self.classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.classes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout rate {} outside [0, 1)", self.dropout));
        }
        let mut c = self.stem_channels;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.k != c {
                return fail(format!("block {i} expects {} channels but receives {c}", b.k));
            }
            self.block_config(b)?.validate()?;
            c = b.k_prime;
        }
        Ok(())
    }

    pub fn block_config(&self, b: &BlockSpec) -> Result<BottleneckConfig> {
        Ok(BottleneckConfig::new(b.k, b.k_prime, self.expansion, b.s)?.with_variant(self.variant))
    }

    /// Channels entering the head.
    pub fn feature_channels(&self) -> usize {
        self.blocks.last().map_or(self.stem_channels, |b| b.k_prime)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Block<S> {
    Fwht(Bottleneck<S>),
    Conv(ConvBottleneck<S>),
}

#[derive(Debug, Clone)]
pub enum BlockCache<S> {
    Fwht(BottleneckCache<S>),
    Conv(ConvBottleneckCache<S>),
}

impl<S: Real> Block<S> {
    fn forward(&self, x: &Tensor<S>, training: bool) -> Result<(Tensor<S>, BlockCache<S>)> {
        Ok(match self {
            Block::Fwht(b) => {
                let (y, c) = b.forward(x, training)?;
                (y, BlockCache::Fwht(c))
            }
            Block::Conv(b) => {
                let (y, c) = b.forward(x, training)?;
                (y, BlockCache::Conv(c))
            }
        })
    }

    fn backward(&self, x: &Tensor<S>, g: &Tensor<S>, cache: &BlockCache<S>) -> Result<(Tensor<S>, Vec<Vec<S>>)> {
        match (self, cache) {
            (Block::Fwht(b), BlockCache::Fwht(c)) => {
                let (gx, grads) = b.backward(g, c)?;
                Ok((gx, grads.named().into_iter().map(|(_, v)| v.to_vec()).collect()))
            }
            (Block::Conv(b), BlockCache::Conv(c)) => b.backward(x, g, c),
            _ => Err(TrainError::Config("block cache does not match block kind".into())),
        }
    }

    fn update_running(&mut self, cache: &BlockCache<S>) {
        match (self, cache) {
            (Block::Fwht(b), BlockCache::Fwht(c)) => b.update_running(c),
            (Block::Conv(b), BlockCache::Conv(c)) => b.update_running(c),
            _ => {}
        }
    }

    fn params(&self) -> Vec<(&'static str, &[S])> {
        match self {
            Block::Fwht(b) => b.params(),
            Block::Conv(b) => b.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<(&'static str, &mut Vec<S>)> {
        match self {
            Block::Fwht(b) => b.params_mut(),
            Block::Conv(b) => b.params_mut(),
        }
    }

    fn buffers(&self) -> Vec<(&'static str, &[S])> {
        match self {
            Block::Fwht(b) => b.buffers(),
            Block::Conv(b) => b.buffers(),
        }
    }

    fn buffers_mut(&mut self) -> Vec<(&'static str, &mut Vec<S>)> {
        match self {
            Block::Fwht(b) => b.buffers_mut(),
            Block::Conv(b) => b.buffers_mut(),
        }
    }

    fn cfg(&self) -> BottleneckConfig {
        match self {
            Block::Fwht(b) => b.cfg,
            Block::Conv(b) => b.cfg,
        }
    }

    fn shape_of(&self, name: &str, len: usize) -> Vec<usize> {
        let cfg = self.cfg();
        match name {
            "depthwise.weights" => vec![3, 3, len / 9],
            "expand.weights" if matches!(self, Block::Conv(_)) => vec![cfg.k, cfg.expanded()],
            "project.weights" if matches!(self, Block::Conv(_)) => vec![cfg.expanded(), cfg.k_prime],
            _ => vec![len],
        }
    }
}

/// A named parameter or buffer view.
#[derive(Debug, Clone, PartialEq)]
pub struct Named<'a, S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: &'a [S],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<S> {
    pub spec: ModelSpec,
    pub stem: Conv3x3<S>,
    pub stem_bn: BatchNorm<S>,
    pub blocks: Vec<Block<S>>,
    pub head: Dense<S>,
}

/// Forward intermediates kept for [`Model::backward`].
#[derive(Debug, Clone)]
pub struct ModelCache<S> {
    input: Tensor<S>,
    stem_bn: BnCache<S>,
    stem_pre: Tensor<S>,
    block_inputs: Vec<Tensor<S>>,
    blocks: Vec<BlockCache<S>>,
    final_shape: Shape,
    features: Vec<S>,
    mask: Option<Vec<S>>,
}

/// Parameter gradients in [`Model::params`] order.
pub type Grads<S> = Vec<Vec<S>>;

impl<S: Real> Model<S> {
    /// Initializes every layer from a generator seeded with `seed`.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem = Conv3x3::init(spec.input_channels, spec.stem_channels, spec.stem_stride, &mut rng);
        let mut blocks = Vec::with_capacity(spec.blocks.len());
        for b in &spec.blocks {
            let cfg = spec.block_config(b)?;
            blocks.push(match spec.kind {
                ModelKind::ToyFwht => Block::Fwht(Bottleneck::new(cfg, &mut rng)?),
                ModelKind::ToyConv => Block::Conv(ConvBottleneck::new(cfg, &mut rng)?),
            });
        }
        let head = Dense::init(spec.feature_channels(), spec.classes, &mut rng);
        Ok(Self {
            stem_bn: BatchNorm::new(spec.stem_channels),
            spec,
            stem,
            blocks,
            head,
        })
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    /// Logits (`batch × classes`) and the cache for [`Model::backward`].
    ///
    /// Batch statistics and dropout are used when `dropout_rng` is given.
    pub fn forward(&self, x: &Tensor<S>, dropout_rng: Option<&mut ChaCha8Rng>) -> Result<(Vec<S>, ModelCache<S>)> {
        let training = dropout_rng.is_some();
        let stem_out = self.stem.forward(x)?;
        let (stem_pre, stem_bn) = self.stem_bn.forward(&stem_out, training)?;
        let mut h = relu6_tensor(&stem_pre);
        let mut block_inputs = Vec::with_capacity(self.blocks.len());
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, c) = block.forward(&h, training)?;
            block_inputs.push(std::mem::replace(&mut h, y));
            caches.push(c);
        }
        let pooled = global_avg_pool(&h);
        let mask = match dropout_rng {
            Some(rng) if self.spec.dropout > 0.0 => Some(dropout_mask(pooled.len(), self.spec.dropout, rng)),
            _ => None,
        };
        let features = match &mask {
            Some(m) => pooled.iter().zip(m).map(|(&a, &b)| a * b).collect(),
            None => pooled,
        };
        let batch = x.shape().n;
        let logits = self.head.forward(&features, batch);
        Ok((
            logits,
            ModelCache {
                input: x.clone(),
                stem_bn,
                stem_pre,
                block_inputs,
                blocks: caches,
                final_shape: h.shape(),
                features,
                mask,
            },
        ))
    }

    /// Inference-mode logits.
    pub fn predict(&self, x: &Tensor<S>) -> Result<Vec<S>> {
        Ok(self.forward(x, None)?.0)
    }

    pub fn backward(&self, cache: &ModelCache<S>, grad_logits: &[S]) -> Result<Grads<S>> {
        let batch = cache.input.shape().n;
        let (g_feat, g_head_w, g_head_b) = self.head.backward(&cache.features, grad_logits, batch);
        let g_pool = match &cache.mask {
            Some(m) => g_feat.iter().zip(m).map(|(&a, &b)| a * b).collect(),
            None => g_feat,
        };
        let mut g = global_avg_pool_backward(&g_pool, cache.final_shape);
        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for ((block, c), x) in self.blocks.iter().zip(&cache.blocks).zip(&cache.block_inputs).rev() {
            let (gx, grads) = block.backward(x, &g, c)?;
            block_grads.push(grads);
            g = gx;
        }
        let g = relu6_backward(&cache.stem_pre, &g);
        let (g, bn) = self.stem_bn.backward(&g, &cache.stem_bn)?;
        let (_, g_stem) = self.stem.backward(&cache.input, &g)?;
        let mut out = vec![g_stem, bn.gamma, bn.beta];
        for grads in block_grads.into_iter().rev() {
            out.extend(grads);
        }
        out.push(g_head_w);
        out.push(g_head_b);
        Ok(out)
    }

    /// Folds the batch statistics of a training forward pass into the running statistics.
    pub fn update_running(&mut self, cache: &ModelCache<S>) {
        self.stem_bn.update_running(&cache.stem_bn);
        for (b, c) in self.blocks.iter_mut().zip(&cache.blocks) {
            b.update_running(c);
        }
    }

    pub fn params(&self) -> Vec<Named<'_, S>> {
        let s = &self.spec;
        let mut out = vec![
            Named {
                name: "stem.weights".into(),
                shape: vec![3, 3, s.input_channels, s.stem_channels],
                values: &self.stem.weights,
            },
            Named {
                name: "stem_bn.gamma".into(),
                shape: vec![s.stem_channels],
                values: &self.stem_bn.gamma,
            },
            Named {
                name: "stem_bn.beta".into(),
                shape: vec![s.stem_channels],
                values: &self.stem_bn.beta,
            },
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for (n, v) in b.params() {
                out.push(Named {
                    name: format!("blocks.{i}.{n}"),
                    shape: b.shape_of(n, v.len()),
                    values: v,
                });
            }
        }
        out.push(Named {
            name: "head.weights".into(),
            shape: vec![self.head.inputs, self.head.outputs],
            values: &self.head.weights,
        });
        out.push(Named {
            name: "head.bias".into(),
            shape: vec![self.head.outputs],
            values: &self.head.bias,
        });
        out
    }

    /// Mutable parameter vectors in [`Model::params`] order.
    pub fn params_mut(&mut self) -> Vec<&mut Vec<S>> {
        let mut out = vec![&mut self.stem.weights, &mut self.stem_bn.gamma, &mut self.stem_bn.beta];
        for b in &mut self.blocks {
            out.extend(b.params_mut().into_iter().map(|(_, v)| v));
        }
        out.push(&mut self.head.weights);
        out.push(&mut self.head.bias);
        out
    }

    /// Batch-norm running statistics.
    pub fn buffers(&self) -> Vec<Named<'_, S>> {
        let c = self.spec.stem_channels;
        let mut out = vec![
            Named {
                name: "stem_bn.running_mean".into(),
                shape: vec![c],
                values: &self.stem_bn.running_mean,
            },
            Named {
                name: "stem_bn.running_var".into(),
                shape: vec![c],
                values: &self.stem_bn.running_var,
            },
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for (n, v) in b.buffers() {
                out.push(Named {
                    name: format!("blocks.{i}.{n}"),
                    shape: vec![v.len()],
                    values: v,
                });
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<S>> {
        let mut out = vec![&mut self.stem_bn.running_mean, &mut self.stem_bn.running_var];
        for b in &mut self.blocks {
            out.extend(b.buffers_mut().into_iter().map(|(_, v)| v));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.values.len()).sum()
    }
}
