//! Dense row-major `f64` arrays and the seeded generator used for every
//! random draw in the crate.
//!
//! All matrix products accumulate each output element as
//! `0 + a[i][0]*b[0][j] + a[i][1]*b[1][j] + ...` in ascending inner index,
//! so results are bitwise identical to the textbook triple loop regardless
//! of how the outer loops are ordered.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!("zero extent in {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count of a matrix; vectors report their length.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bitwise equality, treating `-0.0` and `0.0` (and distinct NaNs) as different.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    fn require_matrix(&self, what: &str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(Error::ShapeMismatch(format!(
                "{what}: expected a matrix, got {s:?}"
            ))),
        }
    }

    fn require_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.require_matrix("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.require_matrix("matmul lhs")?;
        let (k2, n) = other.require_matrix("matmul rhs")?;
        if k != k2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul inner extents {m}x{k} · {k2}x{n}"
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let acc = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let b_row = &other.data[p * n..(p + 1) * n];
                for (c, &b) in acc.iter_mut().zip(b_row) {
                    *c += a * b;
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor> {
        let (k, m) = self.require_matrix("matmul_tn lhs")?;
        let (k2, n) = other.require_matrix("matmul_tn rhs")?;
        if k != k2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul_tn inner extents ({k}x{m})ᵀ · {k2}x{n}"
            )));
        }
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let b_row = &other.data[p * n..(p + 1) * n];
            for i in 0..m {
                let a = self.data[p * m + i];
                let acc = &mut out[i * n..(i + 1) * n];
                for (c, &b) in acc.iter_mut().zip(b_row) {
                    *c += a * b;
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// Adds a length-`cols` vector to every row.
    pub fn add_row_vector(&self, v: &Tensor) -> Result<Tensor> {
        let (r, c) = self.require_matrix("add_row_vector")?;
        if v.shape != [c] {
            return Err(Error::ShapeMismatch(format!(
                "row vector {:?} for {r}x{c} matrix",
                v.shape
            )));
        }
        let mut out = self.data.clone();
        for row in out.chunks_exact_mut(c) {
            for (x, &b) in row.iter_mut().zip(&v.data) {
                *x += b;
            }
        }
        Tensor::new(vec![r, c], out)
    }

    /// Column sums (reduction over rows, top to bottom).
    pub fn sum_rows(&self) -> Result<Tensor> {
        let (_, c) = self.require_matrix("sum_rows")?;
        let mut out = vec![0.0; c];
        for row in self.data.chunks_exact(c) {
            for (s, &x) in out.iter_mut().zip(row) {
                *s += x;
            }
        }
        Tensor::new(vec![c], out)
    }

    /// Gathers the listed rows into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let (r, c) = self.require_matrix("select_rows")?;
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(Error::ShapeMismatch(format!("row {i} of {r}")));
            }
            out.extend_from_slice(&self.data[i * c..(i + 1) * c]);
        }
        Tensor::new(vec![indices.len(), c], out)
    }

    /// `self -= alpha * other`, in place.
    pub fn sub_scaled_assign(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        self.require_same_shape(other)?;
        for (x, &g) in self.data.iter_mut().zip(&other.data) {
            *x -= alpha * g;
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        ewise(EwiseOp::Add, self, Some(other))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        ewise(EwiseOp::Sub, self, Some(other))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        ewise(EwiseOp::Mul, self, Some(other))
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|x| x * c)
    }

    pub fn relu(&self) -> Tensor {
        self.map(|x| if x > 0.0 { x } else { 0.0 })
    }

    /// 1 where the input is strictly positive, 0 elsewhere (including at 0).
    pub fn relu_grad(&self) -> Tensor {
        self.map(|x| if x > 0.0 { 1.0 } else { 0.0 })
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EwiseOp {
    Add,
    Sub,
    Mul,
    Scale(f64),
    Relu,
    ReluGrad,
}

impl EwiseOp {
    fn is_binary(self) -> bool {
        matches!(self, EwiseOp::Add | EwiseOp::Sub | EwiseOp::Mul)
    }
}

/// Element-wise application of `op`. Binary ops need `b` with the same shape as `a`.
pub fn ewise(op: EwiseOp, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    if op.is_binary() {
        let b = b.ok_or_else(|| Error::InvalidArgument(format!("{op:?} needs two operands")))?;
        a.require_same_shape(b)?;
        let f: fn(f64, f64) -> f64 = match op {
            EwiseOp::Add => |x, y| x + y,
            EwiseOp::Sub => |x, y| x - y,
            _ => |x, y| x * y,
        };
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        return Ok(Tensor {
            shape: a.shape.clone(),
            data,
        });
    }
    Ok(match op {
        EwiseOp::Scale(c) => a.scale(c),
        EwiseOp::Relu => a.relu(),
        _ => a.relu_grad(),
    })
}

/// Deterministic generator: ChaCha8 keyed by a 64-bit seed, with normals drawn
/// by the Box-Muller transform (cosine branch only).
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1], keeps ln finite
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

/// i.i.d. `Normal(0, stddev²)` samples in row-major order.
pub fn randn(shape: &[usize], stddev: f64, rng: &mut Rng) -> Result<Tensor> {
    if !(stddev.is_finite() && stddev >= 0.0) {
        return Err(Error::InvalidArgument(format!("stddev {stddev}")));
    }
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| stddev * rng.normal()).collect();
    Tensor::new(shape.to_vec(), data)
}

/// SplitMix64 finalizer; mixes a seed with a counter into a fresh seed.
pub fn mix_seed(seed: u64, counter: u64) -> u64 {
    let mut z = seed ^ counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;
    use proptest::prelude::*;

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.data[i * k + p] * b.data[p * n + j];
                }
                out[i * n + j] = s;
            }
        }
        Tensor::new(vec![m, n], out).unwrap()
    }

    fn uniform_matrix(r: usize, c: usize, rng: &mut Rng) -> Tensor {
        let data = (0..r * c).map(|_| 2.0 * rng.uniform() - 1.0).collect();
        Tensor::new(vec![r, c], data).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let b = Tensor::from_rows(&[&[5.0, 6.0], &[7.0, 8.0]]).unwrap();
        assert!(Tensor::identity(2).matmul(&b).unwrap().bit_eq(&b));
    }

    #[test]
    fn matmul_small_product() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[&[5.0, 6.0], &[7.0, 8.0]]).unwrap();
        let expected = naive_matmul(&a, &b);
        assert_eq!(expected.data(), &[19.0, 22.0, 43.0, 50.0]);
        assert!(a.matmul(&b).unwrap().bit_eq(&expected));
    }

    #[test]
    fn matmul_inner_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&b), Err(Error::ShapeMismatch(_))));
        assert!(matches!(
            a.matmul_tn(&Tensor::zeros(&[3, 1])),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn matmul_tn_matches_explicit_transpose() {
        let mut rng = Rng::new(3);
        let a = uniform_matrix(7, 5, &mut rng);
        let b = uniform_matrix(7, 4, &mut rng);
        let expected = naive_matmul(&a.transpose().unwrap(), &b);
        assert!(a.matmul_tn(&b).unwrap().bit_eq(&expected));
    }

    #[test]
    fn relu_and_grad() {
        let x = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(x.relu().data(), &[0.0, 0.0, 2.0]);
        assert_eq!(x.relu_grad().data(), &[0.0, 0.0, 1.0]);
        let via_ewise = ewise(EwiseOp::ReluGrad, &x, None).unwrap();
        assert!(via_ewise.bit_eq(&x.relu_grad()));
    }

    #[test]
    fn ewise_binary_ops() {
        let x = Tensor::new(vec![2], vec![1.5, -2.0]).unwrap();
        let y = Tensor::new(vec![2], vec![0.5, 4.0]).unwrap();
        assert!(x.add(&Tensor::zeros(&[2])).unwrap().bit_eq(&x));
        assert_eq!(x.sub(&y).unwrap().data(), &[1.0, -6.0]);
        assert_eq!(x.mul(&y).unwrap().data(), &[0.75, -8.0]);
        assert_eq!(
            ewise(EwiseOp::Scale(2.0), &x, None).unwrap().data(),
            &[3.0, -4.0]
        );
        assert!(matches!(
            x.add(&Tensor::zeros(&[3])),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(ewise(EwiseOp::Add, &x, None).is_err());
    }

    #[test]
    fn new_rejects_inconsistent_length() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn randn_zero_stddev_is_zero() {
        let t = randn(&[4, 3], 0.0, &mut Rng::new(1)).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
        assert!(randn(&[2], -1.0, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn randn_is_seed_deterministic() {
        let a = randn(&[5, 5], 1.0, &mut Rng::new(42)).unwrap();
        let b = randn(&[5, 5], 1.0, &mut Rng::new(42)).unwrap();
        assert!(a.bit_eq(&b));
        let c = randn(&[5, 5], 1.0, &mut Rng::new(43)).unwrap();
        assert!(!a.bit_eq(&c));
    }

    #[test]
    fn randn_moments() {
        let t = randn(&[100_000], 1.0, &mut Rng::new(2024)).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((0.98..1.02).contains(&var.sqrt()), "stddev {}", var.sqrt());
    }

    #[test]
    fn mix_seed_separates_counters() {
        assert_ne!(mix_seed(7, 1), mix_seed(7, 2));
        assert_eq!(mix_seed(7, 1), mix_seed(7, 1));
    }

    proptest! {
        #[test]
        fn matmul_matches_naive_bitwise(m in 1usize..6, k in 1usize..6, n in 1usize..6, seed: u64) {
            let mut rng = Rng::new(seed);
            let a = uniform_matrix(m, k, &mut rng);
            let b = uniform_matrix(k, n, &mut rng);
            prop_assert!(a.matmul(&b).unwrap().bit_eq(&naive_matmul(&a, &b)));
        }

        #[test]
        fn matmul_associative(seed: u64) {
            let mut rng = Rng::new(seed);
            let a = uniform_matrix(4, 4, &mut rng);
            let b = uniform_matrix(4, 4, &mut rng);
            let c = uniform_matrix(4, 4, &mut rng);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let err = left.data().iter().zip(right.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-9);
        }

        #[test]
        fn ewise_preserves_shape(r in 1usize..5, c in 1usize..5, seed: u64) {
            let mut rng = Rng::new(seed);
            let a = uniform_matrix(r, c, &mut rng);
            let b = uniform_matrix(r, c, &mut rng);
            for op in [EwiseOp::Add, EwiseOp::Sub, EwiseOp::Mul, EwiseOp::Scale(0.3), EwiseOp::Relu, EwiseOp::ReluGrad] {
                let out = ewise(op, &a, Some(&b)).unwrap();
                prop_assert_eq!(out.shape(), a.shape());
            }
        }
    }
}
