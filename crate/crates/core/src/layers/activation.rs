use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `min(max(x, 0), 6)`.
#[inline]
pub fn relu6<S: Scalar>(x: S) -> S {
    x.max(S::zero()).min(S::lit(6.0))
}

pub fn relu6_tensor<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(relu6)
}

/// Gradient through [`relu6`]: passes where `0 < x < 6`.
pub fn relu6_backward<S: Scalar>(x: &Tensor<S>, grad_out: &Tensor<S>) -> Tensor<S> {
    let six = S::lit(6.0);
    x.zip_map(grad_out, |v, g| if v > S::zero() && v < six { g } else { S::zero() })
        .expect("activation gradient has the input shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_to_zero_six() {
        assert_eq!(relu6(-1.0f32), 0.0);
        assert_eq!(relu6(3.0f32), 3.0);
        assert_eq!(relu6(7.5f64), 6.0);
    }
}
