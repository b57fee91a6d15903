//! Walsh-Hadamard-domain channel mixing and multiplication-free depthwise
//! convolution kernels.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: NHWC tensors and channel-axis pad/slice/concat/pool.
//! - [`wht`]: Hadamard and Walsh matrices, the naive and the fast transform.
//! - [`thresholding`]: soft, smooth and weighted-smooth shrinkage with gradients.
//! - [`mf_ops`]: multiplication-free operators, dot products, depthwise convolution.
//! - [`layers`]: FWHT expansion/projection layers, batch norm, the revised bottleneck.
//! - [`gradcheck`]: finite-difference checks of every backward pass.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`). The aliases below
//! fix the scalar to `f32`, the type used for training and benchmarks.

pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod mf_ops;
pub mod scalar;
pub mod tensor;
pub mod thresholding;
pub mod wht;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Shape;

pub type Tensor<S = f32> = tensor::Tensor<S>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type ThresholdParams32 = thresholding::ThresholdParams<f32>;
pub type MfKernel32 = mf_ops::MfKernel<f32>;
pub type FwhtLayer32 = layers::FwhtLayer<f32>;
pub type Bottleneck32 = layers::Bottleneck<f32>;
pub type BatchNorm32 = layers::BatchNorm<f32>;
