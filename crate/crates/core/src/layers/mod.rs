//! Trainable layers built from the transform and MF kernels.

pub mod activation;
pub mod batch_norm;
pub mod bottleneck;
pub mod fwht_layer;
pub mod mf_conv;

pub use activation::{relu6, relu6_backward, relu6_tensor};
pub use batch_norm::{BatchNorm, BnCache, BnGrads};
pub use bottleneck::{Bottleneck, BottleneckCache, BottleneckConfig, BottleneckGrads};
pub use fwht_layer::{
    fwht_expand_forward, fwht_layer_backward, fwht_project_forward, Direction, FwhtCache,
    FwhtLayer, FwhtLayerConfig, LayerSizes,
};
pub use mf_conv::MfDsConv;

use crate::scalar::Scalar;

/// Trainable scalar count.
pub trait CountParams {
    fn count_params(&self) -> usize;
}

impl CountParams for FwhtLayerConfig {
    fn count_params(&self) -> usize {
        self.param_count()
    }
}

impl<S: Scalar> CountParams for FwhtLayer<S> {
    fn count_params(&self) -> usize {
        self.param_count()
    }
}

impl<S: Scalar> CountParams for MfDsConv<S> {
    fn count_params(&self) -> usize {
        self.param_count()
    }
}

impl<S: Scalar> CountParams for BatchNorm<S> {
    fn count_params(&self) -> usize {
        self.param_count()
    }
}

impl<S: Scalar> CountParams for Bottleneck<S> {
    fn count_params(&self) -> usize {
        self.param_count()
    }
}

/// A dense 1×1 convolution `in → out` with bias.
pub fn pointwise_conv_params(in_channels: usize, out_channels: usize) -> usize {
    in_channels * out_channels + out_channels
}
