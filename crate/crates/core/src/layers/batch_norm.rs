//! Per-channel batch normalization over batch and spatial axes.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<S> {
    pub gamma: Vec<S>,
    pub beta: Vec<S>,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
    pub epsilon: S,
    pub momentum: S,
}

/// Forward intermediates. `batch_stats` is set in training mode.
#[derive(Debug, Clone)]
pub struct BnCache<S> {
    pub normalized: Tensor<S>,
    pub inv_std: Vec<S>,
    pub batch_stats: Option<(Vec<S>, Vec<S>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnGrads<S> {
    pub gamma: Vec<S>,
    pub beta: Vec<S>,
}

impl<S: Scalar> BatchNorm<S> {
    /// `γ = 1`, `β = 0`, running mean 0 and variance 1.
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![S::one(); channels],
            beta: vec![S::zero(); channels],
            running_mean: vec![S::zero(); channels],
            running_var: vec![S::one(); channels],
            epsilon: S::lit(BN_EPSILON),
            momentum: S::lit(BN_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// `γ` and `β`; running statistics are not trainable.
    pub fn param_count(&self) -> usize {
        2 * self.channels()
    }

    /// Normalizes with batch statistics when `training`, running statistics otherwise.
    pub fn forward(&self, x: &Tensor<S>, training: bool) -> Result<(Tensor<S>, BnCache<S>)> {
        let c = self.channels();
        x.expect_channels(c)?;
        let (mean, var) = if training {
            batch_moments(x)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std: Vec<S> = var.iter().map(|&v| (v + self.epsilon).sqrt().recip()).collect();
        let mut normalized = x.clone();
        for v in normalized.channel_vectors_mut() {
            for (j, e) in v.iter_mut().enumerate() {
                *e = (*e - mean[j]) * inv_std[j];
            }
        }
        let mut y = normalized.clone();
        for v in y.channel_vectors_mut() {
            for (j, e) in v.iter_mut().enumerate() {
                *e = *e * self.gamma[j] + self.beta[j];
            }
        }
        Ok((
            y,
            BnCache {
                normalized,
                inv_std,
                batch_stats: training.then_some((mean, var)),
            },
        ))
    }

    /// Folds the batch statistics of a training-mode pass into the running ones.
    pub fn update_running(&mut self, cache: &BnCache<S>) {
        if let Some((mean, var)) = &cache.batch_stats {
            let m = self.momentum;
            let k = S::one() - m;
            for j in 0..self.channels() {
                self.running_mean[j] = m * self.running_mean[j] + k * mean[j];
                self.running_var[j] = m * self.running_var[j] + k * var[j];
            }
        }
    }

    pub fn backward(&self, grad_out: &Tensor<S>, cache: &BnCache<S>) -> Result<(Tensor<S>, BnGrads<S>)> {
        grad_out.expect_shape(cache.normalized.shape())?;
        let c = self.channels();
        let mut grads = BnGrads {
            gamma: vec![S::zero(); c],
            beta: vec![S::zero(); c],
        };
        for (g, xh) in grad_out.channel_vectors().zip(cache.normalized.channel_vectors()) {
            for j in 0..c {
                grads.gamma[j] += g[j] * xh[j];
                grads.beta[j] += g[j];
            }
        }
        let mut grad_in = grad_out.clone();
        if cache.batch_stats.is_some() {
            // dx = γ·inv_std/N · (N·g − Σg − x̂·Σ(g·x̂))
            let count = S::from_count(grad_out.shape().positions());
            for (gi, xh) in grad_in.channel_vectors_mut().zip(cache.normalized.channel_vectors()) {
                for j in 0..c {
                    let scale = self.gamma[j] * cache.inv_std[j] / count;
                    gi[j] = scale * (count * gi[j] - grads.beta[j] - xh[j] * grads.gamma[j]);
                }
            }
        } else {
            for gi in grad_in.channel_vectors_mut() {
                for j in 0..c {
                    gi[j] *= self.gamma[j] * cache.inv_std[j];
                }
            }
        }
        Ok((grad_in, grads))
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        for (name, len) in [
            ("bn_beta", self.beta.len()),
            ("bn_running_mean", self.running_mean.len()),
            ("bn_running_var", self.running_var.len()),
        ] {
            if len != c {
                return Err(Error::ParamLength {
                    name,
                    expected: c,
                    actual: len,
                });
            }
        }
        Ok(())
    }
}

/// Per-channel mean and biased variance over all positions.
fn batch_moments<S: Scalar>(x: &Tensor<S>) -> (Vec<S>, Vec<S>) {
    let c = x.channels();
    let count = S::from_count(x.shape().positions());
    let mut mean = vec![S::zero(); c];
    for v in x.channel_vectors() {
        for j in 0..c {
            mean[j] += v[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![S::zero(); c];
    for v in x.channel_vectors() {
        for j in 0..c {
            let d = v[j] - mean[j];
            var[j] += d * d;
        }
    }
    var.iter_mut().for_each(|s| *s /= count);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn training_output_is_standardized() {
        let x = Tensor::<f64>::from_fn(Shape::new(4, 2, 2, 3).unwrap(), |i| ((i * 7) % 11) as f64);
        let bn = BatchNorm::new(3);
        let (y, cache) = bn.forward(&x, true).unwrap();
        let (mean, var) = batch_moments(&y);
        for j in 0..3 {
            assert!(mean[j].abs() < 1e-12);
            let (_, v) = cache.batch_stats.as_ref().unwrap();
            assert!((var[j] - v[j] / (v[j] + 1e-3)).abs() < 1e-9);
        }
    }

    #[test]
    fn running_stats_use_momentum() {
        let x = Tensor::<f64>::from_vec([2, 1, 1, 1], vec![1.0, 3.0]).unwrap();
        let mut bn = BatchNorm::new(1);
        let (_, cache) = bn.forward(&x, true).unwrap();
        bn.update_running(&cache);
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_var[0] - 1.0).abs() < 1e-12);
        let (y, _) = bn.forward(&x, false).unwrap();
        assert!((y.data()[0] - (1.0 - 0.2) / (1.0f64 + 1e-3).sqrt()).abs() < 1e-12);
    }
}
