//! Multiplication-free (MF) operators.
//!
//! Each operator keeps the sign of `w·x` and replaces the magnitude `|w||x|`
//! by `|w| + |x|` ([`MfVariant::SumMag`]), `2·max(|w|, |x|)`
//! ([`MfVariant::MaxMag`]) or `2·min(|w|, |x|)` ([`MfVariant::MinMag`]). The
//! last two are the `ℓ₁`-style magnitudes of the 2-point Walsh-Hadamard
//! transform `[w + x, w − x]`. Sign application is a conditional negation, so
//! the hot loops contain additions, comparisons and negations only.
//!
//! `sign(0) = 0` throughout, which makes zero padding inert.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Surrogate steepness used when none is configured.
pub const DEFAULT_ALPHA: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MfVariant {
    /// `sign(wx)(|w| + |x|)`.
    #[default]
    SumMag,
    /// `sign(wx)(|w + x| + |w − x|) = 2·sign(wx)·max(|w|, |x|)`.
    MaxMag,
    /// `sign(wx)·||w + x| − |w − x|| = 2·sign(wx)·min(|w|, |x|)`.
    MinMag,
}

impl MfVariant {
    pub const ALL: [MfVariant; 3] = [MfVariant::SumMag, MfVariant::MaxMag, MfVariant::MinMag];

    pub fn name(self) -> &'static str {
        match self {
            MfVariant::SumMag => "sum",
            MfVariant::MaxMag => "max",
            MfVariant::MinMag => "min",
        }
    }

    #[inline]
    fn magnitude<S: Scalar>(self, aw: S, ax: S) -> S {
        match self {
            MfVariant::SumMag => aw + ax,
            MfVariant::MaxMag => {
                let m = aw.max(ax);
                m + m
            }
            MfVariant::MinMag => {
                let m = aw.min(ax);
                m + m
            }
        }
    }
}

/// Negates `mag` when exactly one of `w`, `x` is negative; zero if either is zero.
#[inline]
fn signed<S: Scalar>(w: S, x: S, mag: S) -> S {
    let zero = S::zero();
    if w == zero || x == zero {
        zero
    } else if (w < zero) != (x < zero) {
        -mag
    } else {
        mag
    }
}

/// The MF "product" `w ⊕ x`.
#[inline]
pub fn mf_scalar<S: Scalar>(w: S, x: S, variant: MfVariant) -> S {
    signed(w, x, variant.magnitude(w.abs(), x.abs()))
}

/// The same operator written through the 2-point transform `[w + x, w − x]`.
pub fn mf_scalar_hadamard_form<S: Scalar>(w: S, x: S, variant: MfVariant) -> S {
    let (a, b) = ((w + x).abs(), (w - x).abs());
    let mag = match variant {
        MfVariant::SumMag => w.abs() + x.abs(),
        MfVariant::MaxMag => a + b,
        MfVariant::MinMag => (a - b).abs(),
    };
    (w * x).sgn() * mag
}

/// `Σᵢ wᵢ ⊕ xᵢ`.
pub fn mf_dot<S: Scalar>(w: &[S], x: &[S], variant: MfVariant) -> Result<S> {
    if w.len() != x.len() {
        return Err(Error::LengthMismatch {
            left: w.len(),
            right: x.len(),
        });
    }
    Ok(w.iter().zip(x).fold(S::zero(), |acc, (&a, &b)| acc + mf_scalar(a, b, variant)))
}

/// Sum-magnitude dot product in the form `Σᵢ sign(wᵢ)xᵢ + wᵢ·sign(xᵢ)`.
pub fn mf_dot_sign_form<S: Scalar>(w: &[S], x: &[S]) -> Result<S> {
    if w.len() != x.len() {
        return Err(Error::LengthMismatch {
            left: w.len(),
            right: x.len(),
        });
    }
    Ok(w
        .iter()
        .zip(x)
        .fold(S::zero(), |acc, (&a, &b)| acc + a.sgn() * b + a * b.sgn()))
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: rows * cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<S> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }
}

/// `Wᵀ ⊕ X`: entry `(i, j)` is the MF dot product of column `i` of `W`
/// (`n × m`) and column `j` of `X` (`n × p`).
pub fn mf_matmul<S: Scalar>(w: &Matrix<S>, x: &Matrix<S>, variant: MfVariant) -> Result<Matrix<S>> {
    if w.rows != x.rows {
        return Err(Error::LengthMismatch {
            left: w.rows,
            right: x.rows,
        });
    }
    let wt: Vec<Vec<S>> = (0..w.cols).map(|i| w.column(i)).collect();
    let xt: Vec<Vec<S>> = (0..x.cols).map(|j| x.column(j)).collect();
    let mut data = Vec::with_capacity(w.cols * x.cols);
    for wi in &wt {
        for xj in &xt {
            data.push(mf_dot(wi, xj, variant)?);
        }
    }
    Matrix::new(w.cols, x.cols, data)
}

/// Smoothed derivative of `sign`: `α(1 − tanh²(αu))`.
#[inline]
pub fn sign_derivative<S: Scalar>(u: S, alpha: S) -> S {
    let t = (alpha * u).fast_tanh();
    alpha * (S::one() - t * t)
}

/// Surrogate `(∂/∂w, ∂/∂x)` of `w ⊕ x`.
///
/// For [`MfVariant::SumMag`]: `∂/∂x = sign(w) + 2w·δ̂(x)` and
/// `∂/∂w = sign(x) + 2x·δ̂(w)`, with `δ̂` = [`sign_derivative`].
///
/// The max/min variants reuse that recipe (sign factors contribute
/// `2·magnitude-at-zero·δ̂`, the magnitude is differentiated through `|·|`);
/// this extension is experimental.
#[inline]
pub fn mf_grad<S: Scalar>(w: S, x: S, variant: MfVariant, alpha: S) -> (S, S) {
    mf_grad_with(w, x, sign_derivative(w, alpha), sign_derivative(x, alpha), variant)
}

/// [`mf_grad`] with `δ̂(w)` and `δ̂(x)` supplied.
#[inline]
fn mf_grad_with<S: Scalar>(w: S, x: S, dw: S, dx: S, variant: MfVariant) -> (S, S) {
    let two = S::one() + S::one();
    match variant {
        MfVariant::SumMag => (x.sgn() + two * x * dw, w.sgn() + two * w * dx),
        MfVariant::MaxMag => {
            let (aw, ax) = (w.abs(), x.abs());
            let (sel_w, sel_x) = selector(aw, ax);
            (
                two * two * x * dw + two * x.sgn() * sel_w,
                two * two * w * dx + two * w.sgn() * sel_x,
            )
        }
        MfVariant::MinMag => {
            let (aw, ax) = (w.abs(), x.abs());
            let (sel_x, sel_w) = selector(aw, ax);
            (two * x.sgn() * sel_w, two * w.sgn() * sel_x)
        }
    }
}

/// Subgradient weights of `max(a, b)` with respect to `a` and `b`; ties split evenly.
#[inline]
fn selector<S: Scalar>(a: S, b: S) -> (S, S) {
    let half = S::lit(0.5);
    if a > b {
        (S::one(), S::zero())
    } else if a < b {
        (S::zero(), S::one())
    } else {
        (half, half)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Padding {
    /// Zero padding; output is `ceil(h / stride)` rows.
    #[default]
    Same,
    /// No padding; output is `(h − 3) / stride + 1` rows.
    Valid,
}

/// Spatial geometry of a 3×3 window sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub stride: usize,
}

pub const KERNEL: usize = 3;
pub const TAPS: usize = KERNEL * KERNEL;

impl ConvGeometry {
    pub fn new(h: usize, w: usize, stride: usize, padding: Padding) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        let axis = |len: usize| -> Result<(usize, usize)> {
            match padding {
                Padding::Same => {
                    let out = len.div_ceil(stride);
                    let total = ((out - 1) * stride + KERNEL).saturating_sub(len);
                    Ok((out, total / 2))
                }
                Padding::Valid => {
                    if len < KERNEL {
                        return Err(Error::InvalidConfig(format!(
                            "valid 3x3 window does not fit spatial size {len}"
                        )));
                    }
                    Ok(((len - KERNEL) / stride + 1, 0))
                }
            }
        };
        let (out_h, pad_top) = axis(h)?;
        let (out_w, pad_left) = axis(w)?;
        Ok(Self {
            out_h,
            out_w,
            pad_top,
            pad_left,
            stride,
        })
    }

    /// Input coordinate under tap offset `k` for output coordinate `o`, if inside.
    #[inline]
    pub fn source(&self, o: usize, k: usize, pad: usize, len: usize) -> Option<usize> {
        (o * self.stride + k).checked_sub(pad).filter(|&i| i < len)
    }
}

/// Depthwise 3×3 weight bank with its operator configuration.
///
/// Weights are stored tap-major: `weights[(ky·3 + kx)·channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfKernel<S> {
    pub weights: Vec<S>,
    pub channels: usize,
    pub variant: MfVariant,
    pub alpha: S,
    pub stride: usize,
    pub padding: Padding,
}

impl<S: Scalar> MfKernel<S> {
    pub fn new(weights: Vec<S>, channels: usize, stride: usize) -> Result<Self> {
        let kernel = Self {
            weights,
            channels,
            variant: MfVariant::SumMag,
            alpha: S::lit(DEFAULT_ALPHA),
            stride,
            padding: Padding::Same,
        };
        kernel.validate()?;
        Ok(kernel)
    }

    /// Uniform in `[−a, a]` with `a = √(6 / (9·channels))`.
    pub fn init(channels: usize, stride: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        let a = (6.0 / (TAPS * channels.max(1)) as f64).sqrt();
        let weights = (0..TAPS * channels)
            .map(|_| S::lit(rng.gen_range(-a..=a)))
            .collect();
        Self::new(weights, channels, stride)
    }

    pub fn with_variant(mut self, variant: MfVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_alpha(mut self, alpha: S) -> Result<Self> {
        self.alpha = alpha;
        self.validate()?;
        Ok(self)
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > S::zero()) {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        if self.weights.len() != TAPS * self.channels {
            return Err(Error::ParamLength {
                name: "mf_weights",
                expected: TAPS * self.channels,
                actual: self.weights.len(),
            });
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    pub fn geometry(&self, input: Shape) -> Result<ConvGeometry> {
        ConvGeometry::new(input.h, input.w, self.stride, self.padding)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let g = self.geometry(input)?;
        Shape::new(input.n, g.out_h, g.out_w, self.channels)
    }

    #[inline]
    fn weight(&self, tap: usize, c: usize) -> S {
        self.weights[tap * self.channels + c]
    }
}

/// Visits every `(output row base, input row base, tap)` of a depthwise 3×3 sweep;
/// each base addresses `c` consecutive channels.
fn for_each_tap(
    input: Shape,
    output: Shape,
    g: &ConvGeometry,
    mut f: impl FnMut(usize, usize, usize),
) {
    let c = input.c;
    for n in 0..input.n {
        for oi in 0..output.h {
            for oj in 0..output.w {
                let out_base = output.index(n, oi, oj, 0);
                for ky in 0..KERNEL {
                    let Some(ii) = g.source(oi, ky, g.pad_top, input.h) else {
                        continue;
                    };
                    for kx in 0..KERNEL {
                        let Some(jj) = g.source(oj, kx, g.pad_left, input.w) else {
                            continue;
                        };
                        f(out_base, input.index(n, ii, jj, 0), (ky * KERNEL + kx) * c);
                    }
                }
            }
        }
    }
}

/// Depthwise 3×3 convolution with every tap product replaced by `w ⊕ x`.
pub fn mf_depthwise_conv<S: Scalar>(x: &Tensor<S>, kernel: &MfKernel<S>) -> Result<Tensor<S>> {
    kernel.validate()?;
    x.expect_channels(kernel.channels)?;
    let g = kernel.geometry(x.shape())?;
    let out_shape = kernel.output_shape(x.shape())?;
    let mut out = Tensor::zeros(out_shape);
    let input = x.data();
    let w = &kernel.weights;
    let variant = kernel.variant;
    let c = kernel.channels;
    let acc = out.data_mut();
    for_each_tap(x.shape(), out_shape, &g, |o, i, k| {
        for ((a, &wv), &xv) in acc[o..o + c].iter_mut().zip(&w[k..k + c]).zip(&input[i..i + c]) {
            *a += mf_scalar(wv, xv, variant);
        }
    });
    Ok(out)
}

/// Backward pass of [`mf_depthwise_conv`] using [`mf_grad`] per tap.
///
/// Returns `(grad_input, grad_weights)`.
pub fn mf_depthwise_conv_backward<S: Scalar>(
    x: &Tensor<S>,
    kernel: &MfKernel<S>,
    grad_out: &Tensor<S>,
) -> Result<(Tensor<S>, Vec<S>)> {
    kernel.validate()?;
    x.expect_channels(kernel.channels)?;
    let g = kernel.geometry(x.shape())?;
    let out_shape = kernel.output_shape(x.shape())?;
    grad_out.expect_shape(out_shape)?;
    let mut grad_in = Tensor::zeros(x.shape());
    let mut grad_w = vec![S::zero(); kernel.weights.len()];
    let input = x.data();
    let upstream = grad_out.data();
    let gi = grad_in.data_mut();
    let alpha = kernel.alpha;
    let sd_w: Vec<S> = kernel.weights.iter().map(|&w| sign_derivative(w, alpha)).collect();
    let sd_x: Vec<S> = input.iter().map(|&v| sign_derivative(v, alpha)).collect();
    let (c, variant, w) = (kernel.channels, kernel.variant, &kernel.weights);
    if variant == MfVariant::SumMag {
        // dw = sgn(x) + 2x·δ̂(w), dx = sgn(w) + 2w·δ̂(x).
        let two = S::one() + S::one();
        let sg_w: Vec<S> = w.iter().map(|v| v.sgn()).collect();
        let sg_x: Vec<S> = input.iter().map(|v| v.sgn()).collect();
        for_each_tap(x.shape(), out_shape, &g, |o, i, k| {
            let up = &upstream[o..o + c];
            let (xs, sx, gx_sign) = (&input[i..i + c], &sd_x[i..i + c], &sg_x[i..i + c]);
            let (ws, sw, gw_sign) = (&w[k..k + c], &sd_w[k..k + c], &sg_w[k..k + c]);
            let (gw, gx) = (&mut grad_w[k..k + c], &mut gi[i..i + c]);
            for ch in 0..c {
                gw[ch] += up[ch] * (gx_sign[ch] + two * xs[ch] * sw[ch]);
                gx[ch] += up[ch] * (gw_sign[ch] + two * ws[ch] * sx[ch]);
            }
        });
        return Ok((grad_in, grad_w));
    }
    for_each_tap(x.shape(), out_shape, &g, |o, i, k| {
        let up = &upstream[o..o + c];
        let (xs, sx) = (&input[i..i + c], &sd_x[i..i + c]);
        let (ws, sw) = (&w[k..k + c], &sd_w[k..k + c]);
        let (gw, gx) = (&mut grad_w[k..k + c], &mut gi[i..i + c]);
        for ch in 0..c {
            let (dw, dx) = mf_grad_with(ws[ch], xs[ch], sw[ch], sx[ch], variant);
            gw[ch] += up[ch] * dw;
            gx[ch] += up[ch] * dx;
        }
    });
    Ok((grad_in, grad_w))
}

/// Ordinary multiply-based depthwise 3×3 convolution with the same layout,
/// the baseline the MF layer replaces.
pub fn depthwise_conv<S: Scalar>(x: &Tensor<S>, kernel: &MfKernel<S>) -> Result<Tensor<S>> {
    kernel.validate()?;
    x.expect_channels(kernel.channels)?;
    let g = kernel.geometry(x.shape())?;
    let out_shape = kernel.output_shape(x.shape())?;
    let mut out = Tensor::zeros(out_shape);
    let input = x.data();
    let w = &kernel.weights;
    let acc = out.data_mut();
    let c = kernel.channels;
    for_each_tap(x.shape(), out_shape, &g, |o, i, k| {
        for ((a, &wv), &xv) in acc[o..o + c].iter_mut().zip(&w[k..k + c]).zip(&input[i..i + c]) {
            *a += wv * xv;
        }
    });
    Ok(out)
}

/// Backward pass of [`depthwise_conv`]: `(grad_input, grad_weights)`.
pub fn depthwise_conv_backward<S: Scalar>(
    x: &Tensor<S>,
    kernel: &MfKernel<S>,
    grad_out: &Tensor<S>,
) -> Result<(Tensor<S>, Vec<S>)> {
    kernel.validate()?;
    x.expect_channels(kernel.channels)?;
    let g = kernel.geometry(x.shape())?;
    let out_shape = kernel.output_shape(x.shape())?;
    grad_out.expect_shape(out_shape)?;
    let mut grad_in = Tensor::zeros(x.shape());
    let mut grad_w = vec![S::zero(); kernel.weights.len()];
    let input = x.data();
    let upstream = grad_out.data();
    let gi = grad_in.data_mut();
    let (c, w) = (kernel.channels, &kernel.weights);
    for_each_tap(x.shape(), out_shape, &g, |o, i, k| {
        let up = &upstream[o..o + c];
        let (xs, ws) = (&input[i..i + c], &w[k..k + c]);
        let (gw, gx) = (&mut grad_w[k..k + c], &mut gi[i..i + c]);
        for ch in 0..c {
            gw[ch] += up[ch] * xs[ch];
            gx[ch] += up[ch] * ws[ch];
        }
    });
    Ok((grad_in, grad_w))
}

impl<S: Scalar> MfKernel<S> {
    /// Weight at `(ky, kx, c)`.
    pub fn at(&self, ky: usize, kx: usize, c: usize) -> S {
        self.weight(ky * KERNEL + kx, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_examples() {
        assert_eq!(mf_scalar(3.0, -2.0, MfVariant::SumMag), -5.0);
        assert_eq!(mf_scalar(3.0, -2.0, MfVariant::MaxMag), -6.0);
        assert_eq!(mf_scalar(3.0, -2.0, MfVariant::MinMag), -4.0);
        for v in MfVariant::ALL {
            assert_eq!(
                mf_scalar_hadamard_form(3.0, -2.0, v),
                mf_scalar(3.0, -2.0, v)
            );
            assert_eq!(mf_scalar(0.0, 5.0, v), 0.0);
            assert_eq!(mf_scalar(-5.0, 0.0, v), 0.0);
        }
    }

    #[test]
    fn dot_examples() {
        let sum = MfVariant::SumMag;
        assert_eq!(mf_dot(&[1.0, -2.0], &[3.0, 4.0], sum).unwrap(), -2.0);
        assert_eq!(mf_dot_sign_form(&[1.0, -2.0], &[3.0, 4.0]).unwrap(), -2.0);
        let x = [1.0, -2.0, 3.0];
        assert_eq!(mf_dot(&x, &x, sum).unwrap(), 12.0);
        assert_eq!(mf_dot(&[0.0; 3], &x, sum).unwrap(), 0.0);
        assert!(mf_dot(&[1.0], &x, sum).is_err());
    }

    #[test]
    fn matmul_degenerate_and_l1() {
        let w = Matrix::new(1, 1, vec![3.0]).unwrap();
        let x = Matrix::new(1, 1, vec![-2.0]).unwrap();
        assert_eq!(mf_matmul(&w, &x, MfVariant::SumMag).unwrap().data(), &[-5.0]);
        let col = Matrix::new(3, 1, vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(mf_matmul(&col, &col, MfVariant::SumMag).unwrap().data(), &[12.0]);
        let bad = Matrix::new(2, 1, vec![1.0, 2.0]).unwrap();
        assert!(mf_matmul(&col, &bad, MfVariant::SumMag).is_err());
    }

    #[test]
    fn matmul_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Matrix::from_fn(4, 3, |_, _| rng.gen_range(-2.0..2.0f64));
        let x = Matrix::from_fn(4, 2, |_, _| rng.gen_range(-2.0..2.0f64));
        for v in MfVariant::ALL {
            let out = mf_matmul(&w, &x, v).unwrap();
            assert_eq!((out.rows(), out.cols()), (3, 2));
            for i in 0..3 {
                for j in 0..2 {
                    let mut acc = 0.0;
                    for r in 0..4 {
                        let (a, b) = (w.get(r, i), x.get(r, j));
                        acc += (a * b).signum() * match v {
                            MfVariant::SumMag => a.abs() + b.abs(),
                            MfVariant::MaxMag => 2.0 * a.abs().max(b.abs()),
                            MfVariant::MinMag => 2.0 * a.abs().min(b.abs()),
                        };
                    }
                    assert!((out.get(i, j) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn grad_examples() {
        let (_, dx) = mf_grad(3.0f64, 2.0, MfVariant::SumMag, 10.0);
        assert!((dx - 1.0).abs() < 1e-12);
        let (_, dx) = mf_grad(3.0f64, 0.0, MfVariant::SumMag, 10.0);
        assert_eq!(dx, 61.0);
        let (dw, _) = mf_grad(0.0f64, 0.0, MfVariant::SumMag, 10.0);
        assert_eq!(dw, 0.0);
    }

    #[test]
    fn grad_reproduces_formula_by_independent_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let w: f64 = rng.gen_range(-1.0..1.0);
            let x: f64 = rng.gen_range(-1.0..1.0);
            let alpha = 10.0;
            let delta = |u: f64| alpha * (1.0 - (alpha * u).tanh().powi(2));
            let (dw, dx) = mf_grad(w, x, MfVariant::SumMag, alpha);
            assert!((dx - (w.signum() + 2.0 * w * delta(x))).abs() < 1e-12);
            assert!((dw - (x.signum() + 2.0 * x * delta(w))).abs() < 1e-12);
        }
    }

    #[test]
    fn max_min_grads_match_finite_differences_away_from_zero() {
        // Away from zero and from |w| == |x| the delta terms vanish and the
        // surrogate equals the exact derivative.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for v in [MfVariant::MaxMag, MfVariant::MinMag] {
            for _ in 0..500 {
                let w: f64 = rng.gen_range(1.0..2.0) * if rng.gen() { 1.0 } else { -1.0 };
                let x: f64 = rng.gen_range(1.0..2.0) * if rng.gen() { 1.0 } else { -1.0 };
                if (w.abs() - x.abs()).abs() < 1e-2 {
                    continue;
                }
                let h = 1e-6;
                let fdx = (mf_scalar(w, x + h, v) - mf_scalar(w, x - h, v)) / (2.0 * h);
                let fdw = (mf_scalar(w + h, x, v) - mf_scalar(w - h, x, v)) / (2.0 * h);
                let (dw, dx) = mf_grad(w, x, v, 10.0);
                assert!((dx - fdx).abs() < 1e-2, "{v:?} dx {dx} vs {fdx}");
                assert!((dw - fdw).abs() < 1e-2, "{v:?} dw {dw} vs {fdw}");
            }
        }
    }

    #[test]
    fn geometry_same_and_valid() {
        let g = ConvGeometry::new(4, 4, 2, Padding::Same).unwrap();
        assert_eq!((g.out_h, g.out_w, g.pad_top), (2, 2, 0));
        let g = ConvGeometry::new(5, 5, 1, Padding::Same).unwrap();
        assert_eq!((g.out_h, g.pad_top), (5, 1));
        let g = ConvGeometry::new(7, 7, 2, Padding::Same).unwrap();
        assert_eq!((g.out_h, g.pad_top), (4, 1));
        let g = ConvGeometry::new(5, 6, 1, Padding::Valid).unwrap();
        assert_eq!((g.out_h, g.out_w), (3, 4));
        assert!(ConvGeometry::new(2, 2, 1, Padding::Valid).is_err());
    }

    #[test]
    fn conv_zero_cases_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shape = Shape::new(1, 4, 4, 1).unwrap();
        let x = Tensor::<f64>::from_fn(shape, |_| rng.gen_range(-1.0..1.0));
        let zero_k = MfKernel::new(vec![0.0; 9], 1, 2).unwrap();
        let y = mf_depthwise_conv(&x, &zero_k).unwrap();
        assert_eq!(y.shape().dims(), [1, 2, 2, 1]);
        assert!(y.data().iter().all(|&v| v == 0.0));
        let k = MfKernel::<f64>::init(1, 1, &mut rng).unwrap();
        let y = mf_depthwise_conv(&Tensor::zeros(shape), &k).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        let wrong = Tensor::<f64>::zeros(Shape::new(1, 4, 4, 2).unwrap());
        assert!(mf_depthwise_conv(&wrong, &k).is_err());
    }

    #[test]
    fn kernel_validation() {
        assert!(MfKernel::new(vec![0.0f32; 8], 1, 1).is_err());
        assert!(MfKernel::new(vec![0.0f32; 9], 1, 0).is_err());
        let k = MfKernel::new(vec![0.0f32; 9], 1, 1).unwrap();
        assert!(k.clone().with_alpha(0.0).is_err());
        assert!(k.with_alpha(-1.0).is_err());
    }

    #[test]
    fn init_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = MfKernel::<f32>::init(16, 1, &mut rng).unwrap();
        let a = (6.0f32 / (9.0 * 16.0)).sqrt();
        assert_eq!(k.weights.len(), 144);
        assert!(k.weights.iter().all(|w| w.abs() <= a));
    }
}
