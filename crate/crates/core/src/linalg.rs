//! Small dense vector and matrix types.
//!
//! The design envelope is d <= 64, so everything is a flat `Vec` with
//! straightforward loops. Matrices are row-major.

use std::ops::{Deref, DerefMut, Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense real coordinate vector (parameters, iterates, drifts).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector<T>(pub Vec<T>);

impl<T: Real> Vector<T> {
    pub fn zeros(n: usize) -> Self {
        Vector(vec![T::zero(); n])
    }

    pub fn from_f64(xs: &[f64]) -> Self {
        Vector(xs.iter().map(|&x| T::lit(x)).collect())
    }

    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[i] = T::one();
        v
    }

    pub fn dot(&self, other: &[T]) -> T {
        self.iter().zip(other).map(|(&a, &b)| a * b).sum()
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    pub fn scale(&self, a: T) -> Self {
        Vector(self.iter().map(|&x| a * x).collect())
    }

    pub fn add(&self, other: &[T]) -> Self {
        Vector(self.iter().zip(other).map(|(&a, &b)| a + b).collect())
    }

    pub fn sub(&self, other: &[T]) -> Self {
        Vector(self.iter().zip(other).map(|(&a, &b)| a - b).collect())
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: T, x: &[T]) {
        for (s, &xi) in self.0.iter_mut().zip(x) {
            *s += a * xi;
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.iter().map(|x| x.to_f64_lossy()).collect()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for Vector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for Vector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

impl<T> From<Vec<T>> for Vector<T> {
    fn from(v: Vec<T>) -> Self {
        Vector(v)
    }
}

/// Mean of equally weighted vectors, computed as `x_0 + (1/n) * sum_k (x_k - x_0)`
/// with the sum taken in index order.
///
/// The anchored form returns `x_0` bit-for-bit when all inputs coincide, and the
/// fixed order makes the reduction deterministic.
pub fn anchored_mean<T: Real>(xs: &[Vector<T>]) -> Vector<T> {
    assert!(!xs.is_empty(), "anchored_mean of empty set");
    let anchor = &xs[0];
    let inv_n = T::one() / T::from_count(xs.len());
    let mut acc: Vector<T> = Vector::zeros(anchor.len());
    for x in &xs[1..] {
        for ((a, &xi), &x0) in acc.0.iter_mut().zip(x.iter()).zip(anchor.iter()) {
            *a += xi - x0;
        }
    }
    Vector(
        anchor
            .iter()
            .zip(acc.iter())
            .map(|(&x0, &a)| x0 + a * inv_n)
            .collect(),
    )
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), rows * cols, "row slice length");
        Matrix { rows, cols, data: data.to_vec() }
    }

    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "row slice length");
        Matrix { rows, cols, data: data.iter().map(|&x| T::lit(x)).collect() }
    }

    pub fn from_diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// `u v^T`
    pub fn outer(u: &[T], v: &[T]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vector<T> {
        Vector((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn diagonal(&self) -> Vector<T> {
        Vector((0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vector<T> {
        assert_eq!(self.cols, v.len(), "mul_vec shape");
        Vector(
            (0..self.rows)
                .map(|i| self.data[i * self.cols..(i + 1) * self.cols].iter().zip(v).map(|(&a, &b)| a * b).sum())
                .collect(),
        )
    }

    pub fn add(&self, other: &Matrix<T>) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix<T>) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| s * x).collect() }
    }

    fn zip_with(&self, other: &Matrix<T>, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Frobenius inner product `<A, B> = sum_ij A_ij B_ij`.
    pub fn inner(&self, other: &Matrix<T>) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn frobenius(&self) -> T {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// `(A + A^T) / 2`
    pub fn symmetrize(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| half * (self[(i, j)] + self[(j, i)]))
    }

    /// Rejects non-square, non-finite, or asymmetric (beyond `tol * max(1, max|A|)`) input.
    pub fn check_symmetric(&self, tol: T) -> Result<()> {
        if !self.is_square() {
            return Err(Error::Dimension { expected: self.rows, got: self.cols });
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("matrix entries".into()));
        }
        let asym = self.asymmetry();
        if asym > tol * T::one().max(self.max_abs()) {
            return Err(Error::NotSymmetric { asymmetry: asym.to_f64_lossy() });
        }
        Ok(())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.to_f64_lossy()).collect()
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchored_mean_of_identical_inputs_is_exact() {
        let x = Vector(vec![0.1f64, 1.0 / 3.0, -7.25e-3]);
        let xs = vec![x.clone(); 3];
        assert_eq!(anchored_mean(&xs), x);
    }

    #[test]
    fn anchored_mean_matches_arithmetic_mean() {
        let xs = vec![Vector(vec![1.0f64, 2.0]), Vector(vec![3.0, 6.0])];
        assert_eq!(anchored_mean(&xs).0, vec![2.0, 4.0]);
    }

    #[test]
    fn matmul_and_transpose() {
        let a = Matrix::<f64>::from_f64(2, 3, &[1., 2., 3., 4., 5., 6.]);
        let b = a.matmul(&a.transpose());
        assert_eq!(b.as_slice(), &[14., 32., 32., 77.]);
        assert_eq!(a.mul_vec(&[1., 0., -1.]).0, vec![-2., -2.]);
    }

    #[test]
    fn check_symmetric_rejects() {
        let m = Matrix::<f64>::from_f64(2, 2, &[1., 2., 2.1, 1.]);
        assert!(matches!(m.check_symmetric(1e-10), Err(Error::NotSymmetric { .. })));
        let n = Matrix::<f64>::from_f64(2, 2, &[1., f64::NAN, f64::NAN, 1.]);
        assert!(matches!(n.check_symmetric(1e-10), Err(Error::NonFinite(_))));
    }
}
