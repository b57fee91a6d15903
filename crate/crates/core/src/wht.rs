//! Walsh-Hadamard transforms along the channel axis.
//!
//! Two implementations share a [`TransformPlan`]:
//!
//! - [`naive_wht`] multiplies every channel vector by an explicit ±1 matrix,
//!   `O(m²)` per vector.
//! - [`fwht`] runs `log₂ m` in-place add/subtract butterfly stages,
//!   `O(m log m)` per vector, followed by the sequency permutation when
//!   requested and by the scale factor.
//!
//! The `n·h·w` channel vectors of a tensor are independent, so both are
//! computed in parallel batches. Each vector is transformed by the same
//! sequence of operations regardless of scheduling, so results are
//! bit-identical to a sequential run.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Below this many scalars per tensor the transforms stay on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

/// Row order of the transform matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum Ordering {
    /// Hadamard (Kronecker) order, produced directly by the butterflies.
    #[default]
    Natural,
    /// Walsh order: rows sorted by ascending number of sign changes.
    Sequency,
}

/// Constant factor applied after the ±1 transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum Scaling {
    /// Factor 1.
    #[default]
    None,
    /// Factor `1/√m`; the transform is orthonormal and its own inverse.
    Orthonormal,
    /// Factor `1/m`; inverts an unscaled transform.
    Inverse,
}

/// Size, ordering and scaling of a length-`2^k` Walsh-Hadamard transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransformPlan {
    size: usize,
    ordering: Ordering,
    scaling: Scaling,
}

impl TransformPlan {
    pub fn new(size: usize, ordering: Ordering, scaling: Scaling) -> Result<Self> {
        if !size.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(size));
        }
        Ok(Self {
            size,
            ordering,
            scaling,
        })
    }

    /// Natural ordering, orthonormal scaling: the convention used inside layers.
    pub fn orthonormal(size: usize) -> Result<Self> {
        Self::new(size, Ordering::Natural, Scaling::Orthonormal)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `k` with `size == 2^k`.
    pub fn log2(&self) -> u32 {
        self.size.trailing_zeros()
    }

    pub fn ordering(&self) -> Ordering {
        self.ordering
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    pub fn with_scaling(self, scaling: Scaling) -> Self {
        Self { scaling, ..self }
    }

    /// The scale factor as a scalar, `None` when it is exactly one.
    pub fn factor<S: Scalar>(&self) -> Option<S> {
        let m = S::from_count(self.size);
        match self.scaling {
            Scaling::None => None,
            _ if self.size == 1 => None,
            Scaling::Orthonormal => Some(m.sqrt().recip()),
            Scaling::Inverse => Some(m.recip()),
        }
    }

    /// Explicit transform matrix (without the scale factor).
    pub fn matrix(&self) -> SignMatrix {
        match self.ordering {
            Ordering::Natural => hadamard_matrix(self.log2()),
            Ordering::Sequency => walsh_matrix(self.log2()),
        }
    }
}

/// Square matrix with entries in `{−1, +1}`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMatrix {
    size: usize,
    entries: Vec<i8>,
}

impl SignMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.entries[row * self.size + col]
    }

    pub fn row(&self, row: usize) -> &[i8] {
        &self.entries[row * self.size..(row + 1) * self.size]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i8]> {
        self.entries.chunks_exact(self.size)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Rows reordered so that row `i` of the result is row `perm[i]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        let mut entries = Vec::with_capacity(self.entries.len());
        for &p in perm {
            entries.extend_from_slice(self.row(p));
        }
        Self {
            size: self.size,
            entries,
        }
    }

    /// Entries converted to scalars, row-major.
    pub fn to_scalars<S: Scalar>(&self) -> Vec<S> {
        self.entries
            .iter()
            .map(|&e| if e > 0 { S::one() } else { -S::one() })
            .collect()
    }

    /// `M · v`, evaluated row by row.
    pub fn mul_vec<S: Scalar>(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.size);
        self.rows()
            .map(|row| {
                row.iter()
                    .zip(v)
                    .fold(S::zero(), |acc, (&e, &x)| if e > 0 { acc + x } else { acc - x })
            })
            .collect()
    }
}

/// `H_0 = [1]`, `H_k = [[H_{k−1}, H_{k−1}], [H_{k−1}, −H_{k−1}]]`.
pub fn hadamard_matrix(k: u32) -> SignMatrix {
    let mut size = 1usize;
    let mut entries = vec![1i8];
    for _ in 0..k {
        let next = size * 2;
        let mut grown = vec![0i8; next * next];
        for i in 0..size {
            for j in 0..size {
                let e = entries[i * size + j];
                grown[i * next + j] = e;
                grown[i * next + j + size] = e;
                grown[(i + size) * next + j] = e;
                grown[(i + size) * next + j + size] = -e;
            }
        }
        size = next;
        entries = grown;
    }
    SignMatrix { size, entries }
}

/// Reverses the low `bits` bits of `i`.
#[inline]
pub fn bit_reverse(i: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - bits)
    }
}

#[inline]
pub fn gray_code(i: usize) -> usize {
    i ^ (i >> 1)
}

/// `σ` with Walsh row `i` equal to Hadamard row `σ(i)`:
/// `σ(i) = bit_reverse(gray_code(i))` over `k` bits.
pub fn sequency_permutation(k: u32) -> Vec<usize> {
    (0..1usize << k).map(|i| bit_reverse(gray_code(i), k)).collect()
}

/// Sequency-ordered Walsh matrix.
pub fn walsh_matrix(k: u32) -> SignMatrix {
    hadamard_matrix(k).permute_rows(&sequency_permutation(k))
}

/// Unscaled natural-order transform of one vector, in place.
///
/// Iterative radix-2 butterflies: only additions and subtractions.
pub fn fwht_in_place<S: Scalar>(v: &mut [S]) {
    let m = v.len();
    debug_assert!(m.is_power_of_two());
    if m >= 2 {
        for p in v.chunks_exact_mut(2) {
            let (a, b) = (p[0], p[1]);
            p[0] = a + b;
            p[1] = a - b;
        }
    }
    if m >= 4 {
        for p in v.chunks_exact_mut(4) {
            let (a, b, c, d) = (p[0], p[1], p[2], p[3]);
            p[0] = a + c;
            p[1] = b + d;
            p[2] = a - c;
            p[3] = b - d;
        }
    }
    let mut half = 4;
    while half < m {
        for block in v.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        half *= 2;
    }
}

/// Applies `plan` to one vector in place. `scratch` must hold `plan.size()`
/// scalars when the plan is sequency-ordered; it is unused otherwise.
pub fn fwht_vector<S: Scalar>(
    v: &mut [S],
    plan: &TransformPlan,
    perm: &[usize],
    scratch: &mut [S],
) {
    fwht_in_place(v);
    if plan.ordering == Ordering::Sequency {
        scratch.copy_from_slice(v);
        for (out, &p) in v.iter_mut().zip(perm) {
            *out = scratch[p];
        }
    }
    if let Some(f) = plan.factor::<S>() {
        v.iter_mut().for_each(|x| *x *= f);
    }
}

fn for_each_vector<S: Scalar>(
    data: &mut [S],
    m: usize,
    init: impl Fn() -> Vec<S> + Sync + Send,
    f: impl Fn(&mut [S], &mut Vec<S>) + Sync + Send,
) {
    if data.len() >= PAR_THRESHOLD {
        // Chunked so that each task reuses one scratch buffer.
        let per_task = (PAR_THRESHOLD / m).max(1) * m;
        data.par_chunks_mut(per_task).for_each(|chunk| {
            let mut scratch = init();
            chunk.chunks_exact_mut(m).for_each(|v| f(v, &mut scratch));
        });
    } else {
        let mut scratch = init();
        data.chunks_exact_mut(m).for_each(|v| f(v, &mut scratch));
    }
}

/// Fast transform of every channel vector of `x`.
pub fn fwht<S: Scalar>(x: &Tensor<S>, plan: &TransformPlan) -> Result<Tensor<S>> {
    let mut y = x.clone();
    fwht_tensor_in_place(&mut y, plan)?;
    Ok(y)
}

pub fn fwht_tensor_in_place<S: Scalar>(x: &mut Tensor<S>, plan: &TransformPlan) -> Result<()> {
    x.expect_channels(plan.size)?;
    let m = plan.size;
    let perm = match plan.ordering {
        Ordering::Natural => Vec::new(),
        Ordering::Sequency => sequency_permutation(plan.log2()),
    };
    let scratch_len = if perm.is_empty() { 0 } else { m };
    for_each_vector(
        x.data_mut(),
        m,
        || vec![S::zero(); scratch_len],
        |v, scratch| fwht_vector(v, plan, &perm, scratch),
    );
    Ok(())
}

/// Reference transform: explicit matrix times each channel vector.
pub fn naive_wht<S: Scalar>(x: &Tensor<S>, plan: &TransformPlan) -> Result<Tensor<S>> {
    x.expect_channels(plan.size)?;
    let m = plan.size;
    let matrix = plan.matrix().to_scalars::<S>();
    let factor = plan.factor::<S>();
    let mut y = x.clone();
    for_each_vector(
        y.data_mut(),
        m,
        || vec![S::zero(); m],
        |v, acc| {
            // The matrix is symmetric, so M·v accumulates rows of M scaled by v[k].
            acc.iter_mut().for_each(|a| *a = S::zero());
            for (k, &vk) in v.iter().enumerate() {
                let row = &matrix[k * m..(k + 1) * m];
                for (a, &e) in acc.iter_mut().zip(row) {
                    *a += vk * e;
                }
            }
            match factor {
                Some(f) => v.iter_mut().zip(acc.iter()).for_each(|(o, &a)| *o = a * f),
                None => v.copy_from_slice(acc),
            }
        },
    );
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sign_changes(row: &[i8]) -> usize {
        row.windows(2).filter(|w| w[0] != w[1]).count()
    }

    #[test]
    fn hadamard_fixtures() {
        assert_eq!(hadamard_matrix(0).to_scalars::<f64>(), vec![1.0]);
        assert_eq!(
            hadamard_matrix(1).to_scalars::<f64>(),
            vec![1.0, 1.0, 1.0, -1.0]
        );
        let h2: Vec<Vec<i8>> = hadamard_matrix(2).rows().map(|r| r.to_vec()).collect();
        assert_eq!(
            h2,
            vec![
                vec![1, 1, 1, 1],
                vec![1, -1, 1, -1],
                vec![1, 1, -1, -1],
                vec![1, -1, -1, 1],
            ]
        );
    }

    #[test]
    fn hadamard_is_kronecker_of_h1() {
        for k in 1..6 {
            let hk = hadamard_matrix(k);
            let prev = hadamard_matrix(k - 1);
            let h1 = hadamard_matrix(1);
            let s = prev.size();
            for i in 0..hk.size() {
                for j in 0..hk.size() {
                    assert_eq!(hk.get(i, j), h1.get(i / s, j / s) * prev.get(i % s, j % s));
                }
            }
        }
    }

    #[test]
    fn walsh_fixtures() {
        assert_eq!(sequency_permutation(0), vec![0]);
        assert_eq!(sequency_permutation(2), vec![0, 2, 3, 1]);
        let w2: Vec<Vec<i8>> = walsh_matrix(2).rows().map(|r| r.to_vec()).collect();
        assert_eq!(
            w2,
            vec![
                vec![1, 1, 1, 1],
                vec![1, 1, -1, -1],
                vec![1, -1, -1, 1],
                vec![1, -1, 1, -1],
            ]
        );
        assert_eq!(walsh_matrix(1), hadamard_matrix(1));
    }

    #[test]
    fn sequency_matches_sign_change_oracle() {
        for k in 0..=6 {
            let h = hadamard_matrix(k);
            // Oracle: Hadamard row indices sorted by sign-change count.
            let mut by_changes: Vec<usize> = (0..h.size()).collect();
            by_changes.sort_by_key(|&i| sign_changes(h.row(i)));
            assert_eq!(sequency_permutation(k), by_changes, "k={k}");
            let w = walsh_matrix(k);
            for (i, row) in w.rows().enumerate() {
                assert_eq!(sign_changes(row), i);
            }
        }
    }

    #[test]
    fn matrices_are_symmetric() {
        for k in 0..=6 {
            assert!(hadamard_matrix(k).is_symmetric());
            assert!(walsh_matrix(k).is_symmetric());
        }
    }

    #[test]
    fn naive_examples() {
        let plan = TransformPlan::new(4, Ordering::Natural, Scaling::None).unwrap();
        let e0 = Tensor::vector(&[1.0f64, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(naive_wht(&e0, &plan).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
        let x = Tensor::vector(&[1.0f64, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(naive_wht(&x, &plan).unwrap().data(), &[10.0, -2.0, -4.0, 0.0]);
        let one = Tensor::vector(&[3.5f64]).unwrap();
        for scaling in [Scaling::None, Scaling::Orthonormal, Scaling::Inverse] {
            let plan = TransformPlan::new(1, Ordering::Natural, scaling).unwrap();
            assert_eq!(naive_wht(&one, &plan).unwrap(), one);
            assert_eq!(fwht(&one, &plan).unwrap(), one);
        }
    }

    #[test]
    fn fwht_dc_input() {
        let plan = TransformPlan::new(4, Ordering::Natural, Scaling::None).unwrap();
        let x = Tensor::vector(&[1.0f32; 4]).unwrap();
        assert_eq!(fwht(&x, &plan).unwrap().data(), &[4.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let plan = TransformPlan::orthonormal(8).unwrap();
        let x = Tensor::vector(&[1.0f32; 4]).unwrap();
        assert!(matches!(fwht(&x, &plan), Err(Error::ChannelCount { expected: 8, actual: 4 })));
        assert!(naive_wht(&x, &plan).is_err());
        assert!(matches!(
            TransformPlan::orthonormal(12),
            Err(Error::NotPowerOfTwo(12))
        ));
    }

    #[test]
    fn sequency_fwht_equals_permuted_natural() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 0..=7u32 {
            let m = 1usize << k;
            let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = Tensor::vector(&v).unwrap();
            let nat = fwht(&x, &TransformPlan::new(m, Ordering::Natural, Scaling::None).unwrap()).unwrap();
            let seq = fwht(&x, &TransformPlan::new(m, Ordering::Sequency, Scaling::None).unwrap()).unwrap();
            let walsh = walsh_matrix(k).mul_vec(&v);
            for (i, &p) in sequency_permutation(k).iter().enumerate() {
                assert_eq!(seq.data()[i], nat.data()[p]);
                assert!((walsh[i] - nat.data()[p]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parallel_path_is_bit_identical_to_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = Shape::new(4, 16, 16, 64).unwrap();
        let x = Tensor::<f32>::from_fn(shape, |_| rng.gen_range(-1.0..1.0));
        assert!(x.data().len() >= PAR_THRESHOLD);
        for ordering in [Ordering::Natural, Ordering::Sequency] {
            let plan = TransformPlan::new(64, ordering, Scaling::Orthonormal).unwrap();
            let par = fwht(&x, &plan).unwrap();
            let mut seq = x.clone();
            let perm = sequency_permutation(6);
            let mut scratch = vec![0.0f32; 64];
            for v in seq.channel_vectors_mut() {
                fwht_vector(v, &plan, &perm, &mut scratch);
            }
            assert_eq!(par, seq);
        }
    }
}
