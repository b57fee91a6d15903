//! Dense rank-4 tensors in NHWC layout and the channel-axis operations the
//! transform layers are built from.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `(batch, rows, cols, channels)`; every dimension is at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub fn new(n: usize, h: usize, w: usize, c: usize) -> Result<Self> {
        if n == 0 || h == 0 || w == 0 || c == 0 {
            return Err(Error::EmptyDimension([n, h, w, c]));
        }
        Ok(Self { n, h, w, c })
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.h, self.w, self.c]
    }

    /// Number of channel vectors, `n * h * w`.
    pub fn positions(&self) -> usize {
        self.n * self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.positions() * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_channels(&self, c: usize) -> Result<Self> {
        Self::new(self.n, self.h, self.w, c)
    }

    #[inline]
    pub fn index(&self, n: usize, i: usize, j: usize, c: usize) -> usize {
        ((n * self.h + i) * self.w + j) * self.c + c
    }
}

/// Dense NHWC tensor, channel-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Shape,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Shape, data: Vec<S>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::DataLength {
                shape: shape.dims(),
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<S>) -> Result<Self> {
        Self::new(Shape::new(dims[0], dims[1], dims[2], dims[3])?, data)
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![S::zero(); shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: S) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    /// Single channel vector, shape `(1, 1, 1, len)`.
    pub fn vector(values: &[S]) -> Result<Self> {
        Self::from_vec([1, 1, 1, values.len()], values.to_vec())
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> S) -> Self {
        Self {
            shape,
            data: (0..shape.len()).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape.c
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn at(&self, n: usize, i: usize, j: usize, c: usize) -> S {
        self.data[self.shape.index(n, i, j, c)]
    }

    /// Iterator over the `n * h * w` channel vectors.
    pub fn channel_vectors(&self) -> std::slice::ChunksExact<'_, S> {
        self.data.chunks_exact(self.shape.c)
    }

    pub fn channel_vectors_mut(&mut self) -> std::slice::ChunksExactMut<'_, S> {
        let c = self.shape.c;
        self.data.chunks_exact_mut(c)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.expect_shape(other.shape)?;
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, k: S) -> Self {
        self.map(|v| v * k)
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    /// Sum of elementwise products with `other`.
    pub fn dot(&self, other: &Self) -> Result<S> {
        self.expect_shape(other.shape)?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<S> {
        self.expect_shape(other.shape)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn expect_shape(&self, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(Error::ShapeMismatch {
                expected: expected.dims(),
                actual: self.shape.dims(),
            });
        }
        Ok(())
    }

    pub fn expect_channels(&self, expected: usize) -> Result<()> {
        if self.shape.c != expected {
            return Err(Error::ChannelCount {
                expected,
                actual: self.shape.c,
            });
        }
        Ok(())
    }

    /// Converts every element to another scalar type.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| T::from_f64(v.as_f64()).unwrap_or_else(T::nan))
                .collect(),
        }
    }

    /// Appends `b` zero channels to every channel vector.
    pub fn pad_channels(&self, b: usize) -> Self {
        if b == 0 {
            return self.clone();
        }
        let c = self.shape.c;
        let out_shape = Shape { c: c + b, ..self.shape };
        let mut data = Vec::with_capacity(out_shape.len());
        for v in self.channel_vectors() {
            data.extend_from_slice(v);
            data.extend(std::iter::repeat(S::zero()).take(b));
        }
        Self {
            shape: out_shape,
            data,
        }
    }

    /// Channels `lo..hi` (half-open).
    pub fn slice_channels(&self, lo: usize, hi: usize) -> Result<Self> {
        let c = self.shape.c;
        if lo >= hi || hi > c {
            return Err(Error::ChannelRange { lo, hi, channels: c });
        }
        if lo == 0 && hi == c {
            return Ok(self.clone());
        }
        let out_shape = Shape { c: hi - lo, ..self.shape };
        let mut data = Vec::with_capacity(out_shape.len());
        for v in self.channel_vectors() {
            data.extend_from_slice(&v[lo..hi]);
        }
        Ok(Self {
            shape: out_shape,
            data,
        })
    }

    /// Stacks `other`'s channels after `self`'s.
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        let (a, b) = (self.shape, other.shape);
        if (a.n, a.h, a.w) != (b.n, b.h, b.w) {
            return Err(Error::ShapeMismatch {
                expected: [a.n, a.h, a.w, b.c],
                actual: b.dims(),
            });
        }
        let out_shape = Shape { c: a.c + b.c, ..a };
        let mut data = Vec::with_capacity(out_shape.len());
        for (u, v) in self.channel_vectors().zip(other.channel_vectors()) {
            data.extend_from_slice(u);
            data.extend_from_slice(v);
        }
        Ok(Self {
            shape: out_shape,
            data,
        })
    }

    /// Averages non-overlapping groups of `r` consecutive channels.
    pub fn avgpool_channels(&self, r: usize) -> Result<Self> {
        let c = self.shape.c;
        if r == 0 || c % r != 0 {
            return Err(Error::NotDivisible { channels: c, pool: r });
        }
        if r == 1 {
            return Ok(self.clone());
        }
        let inv = S::one() / S::from_count(r);
        let out_shape = Shape { c: c / r, ..self.shape };
        let mut data = Vec::with_capacity(out_shape.len());
        for v in self.channel_vectors() {
            data.extend(v.chunks_exact(r).map(|g| g.iter().copied().sum::<S>() * inv));
        }
        Ok(Self {
            shape: out_shape,
            data,
        })
    }

    /// Adjoint of [`Tensor::avgpool_channels`]: spreads each channel as `g / r`
    /// over its group.
    pub fn avgpool_channels_adjoint(&self, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::NotDivisible {
                channels: self.shape.c,
                pool: r,
            });
        }
        let inv = S::one() / S::from_count(r);
        let out_shape = Shape {
            c: self.shape.c * r,
            ..self.shape
        };
        let mut data = Vec::with_capacity(out_shape.len());
        for v in self.channel_vectors() {
            for &g in v {
                data.extend(std::iter::repeat(g * inv).take(r));
            }
        }
        Ok(Self {
            shape: out_shape,
            data,
        })
    }
}
