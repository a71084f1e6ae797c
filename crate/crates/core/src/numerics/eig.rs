//! Symmetric eigendecomposition (cyclic Jacobi) and spectral matrix functions.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition `M = V diag(lambda) V^T` of a real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig<T> {
    /// Eigenvalues, sorted descending.
    pub eigenvalues: Vec<T>,
    /// Orthonormal eigenvectors stored as columns, matching `eigenvalues`.
    pub eigenvectors: Matrix<T>,
    /// Eigenvalues with `|lambda| <= rank_threshold` are treated as zero.
    pub rank_threshold: T,
}

impl<T: Real> SymEig<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_null(&self, i: usize) -> bool {
        self.eigenvalues[i].abs() <= self.rank_threshold
    }

    /// Eigenvalue after rank thresholding.
    pub fn effective(&self, i: usize) -> T {
        if self.is_null(i) {
            T::zero()
        } else {
            self.eigenvalues[i]
        }
    }

    /// Number of eigenvalues above the threshold.
    pub fn rank(&self) -> usize {
        (0..self.dim()).filter(|&i| !self.is_null(i)).count()
    }

    pub fn vector(&self, i: usize) -> Vec<T> {
        self.eigenvectors.column(i).into_inner()
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        let d: Vec<T> = self.eigenvalues.clone();
        let v = &self.eigenvectors;
        v.matmul(&Matrix::from_diag(&d)).matmul(&v.transpose())
    }

    /// `V^T M V`: coordinates of `m` in the eigenbasis.
    pub fn to_eigenbasis(&self, m: &Matrix<T>) -> Matrix<T> {
        let v = &self.eigenvectors;
        v.transpose().matmul(m).matmul(v)
    }

    /// `V C V^T`: inverse of [`to_eigenbasis`](Self::to_eigenbasis).
    pub fn from_eigenbasis(&self, c: &Matrix<T>) -> Matrix<T> {
        let v = &self.eigenvectors;
        v.matmul(c).matmul(&v.transpose())
    }
}

/// Default rank threshold: `1e-8 * max(1, |lambda_max|)`.
pub fn default_rank_threshold<T: Real>(max_abs_eigenvalue: T) -> T {
    T::tol(1e-8) * T::one().max(max_abs_eigenvalue)
}

/// Eigendecomposition with the default relative rank threshold.
pub fn sym_eig_default<T: Real>(m: &Matrix<T>) -> Result<SymEig<T>> {
    let mut eig = sym_eig(m, T::zero())?;
    let lmax = eig.eigenvalues.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
    eig.rank_threshold = default_rank_threshold(lmax);
    Ok(eig)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// The input is symmetrized before rotating. Eigenvector signs are fixed so the
/// first non-negligible component of each column is positive.
pub fn sym_eig<T: Real>(m: &Matrix<T>, rank_threshold: T) -> Result<SymEig<T>> {
    m.check_symmetric(T::tol(1e-10))?;
    let n = m.rows();
    let mut a = m.symmetrize();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius();

    let mut converged = n <= 1 || scale == T::zero();
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // Negligible element: drop it rather than rotate (late sweeps only).
                let tiny = T::lit(100.0) * apq.abs();
                if sweeps > 4 && app.abs() + tiny == app.abs() && aqq.abs() + tiny == aqq.abs() {
                    a[(p, q)] = T::zero();
                    a[(q, p)] = T::zero();
                    continue;
                }
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = {
                    let r = T::one() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    if theta < T::zero() {
                        -r
                    } else {
                        r
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    a[(k, p)] = new_kp;
                    a[(p, k)] = new_kp;
                    a[(k, q)] = new_kq;
                    a[(q, k)] = new_kq;
                }
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        let off = off_diagonal_norm(&a);
        converged = off <= T::epsilon() * scale || off == T::zero();
    }
    if !converged {
        return Err(Error::EigenNoConvergence {
            sweeps,
            off_norm: off_diagonal_norm(&a).to_f64_lossy(),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).expect("finite eigenvalues"));
    let eigenvalues: Vec<T> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    let sign_floor = T::lit(1e-3) / T::from_count(n.max(1)).sqrt();
    for (col, &src) in order.iter().enumerate() {
        let lead = (0..n).map(|k| v[(k, src)]).find(|x| x.abs() > sign_floor).unwrap_or(T::one());
        let sign = if lead < T::zero() { -T::one() } else { T::one() };
        for k in 0..n {
            eigenvectors[(k, col)] = sign * v[(k, src)];
        }
    }
    Ok(SymEig { eigenvalues, eigenvectors, rank_threshold })
}

fn off_diagonal_norm<T: Real>(a: &Matrix<T>) -> T {
    let n = a.rows();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Spectral matrix function `V diag(f(lambda_i)) V^T`.
///
/// Eigenvalues at or below the rank threshold are passed to `f` as exact zero.
/// A non-finite `f(lambda)` is treated as `f` being undefined there.
pub fn matrix_fn<T: Real>(eig: &SymEig<T>, f: impl Fn(T) -> T) -> Result<Matrix<T>> {
    let n = eig.dim();
    let mut vals = Vec::with_capacity(n);
    for i in 0..n {
        let lam = eig.effective(i);
        let y = f(lam);
        if !y.is_finite() {
            return Err(Error::UndefinedAtEigenvalue { eigenvalue: lam.to_f64_lossy() });
        }
        vals.push(y);
    }
    let v = &eig.eigenvectors;
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s: T = (0..n).map(|k| v[(i, k)] * vals[k] * v[(j, k)]).sum();
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    Ok(out)
}

/// Square root of the PSD part of a symmetric matrix (negative eigenvalues clamped to 0).
pub fn psd_sqrt<T: Real>(m: &Matrix<T>) -> Result<Matrix<T>> {
    let eig = sym_eig(m, T::zero())?;
    matrix_fn(&eig, |x| x.max(T::zero()).sqrt())
}
