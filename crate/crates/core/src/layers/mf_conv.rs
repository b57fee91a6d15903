use crate::error::Result;
use crate::mf_ops::{mf_depthwise_conv, mf_depthwise_conv_backward, MfKernel};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// 3×3 multiplication-free depthwise convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MfDsConv<S> {
    pub kernel: MfKernel<S>,
}

impl<S: Scalar> MfDsConv<S> {
    pub fn new(kernel: MfKernel<S>) -> Self {
        Self { kernel }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        mf_depthwise_conv(x, &self.kernel)
    }

    /// `(grad_input, grad_weights)` from the surrogate per-tap derivatives.
    pub fn backward(&self, x: &Tensor<S>, grad_out: &Tensor<S>) -> Result<(Tensor<S>, Vec<S>)> {
        mf_depthwise_conv_backward(x, &self.kernel, grad_out)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.kernel.output_shape(input)
    }

    /// Nine weights per channel.
    pub fn param_count(&self) -> usize {
        self.kernel.param_count()
    }
}
