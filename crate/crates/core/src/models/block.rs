use rand::RngCore;

use super::{LossModel, ManifoldHint, NoiseFactor, NoiseKind};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::scalar::Real;

/// `L(theta) = theta^T H0 theta / 2` with `H0 = diag(lambda_1..lambda_m, 0..0)`.
///
/// The manifold is the null space of `H0` and the gradient-flow projection is
/// the coordinate projector onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockQuadratic<T> {
    lambdas: Vec<T>,
    dim: usize,
    noise: NoiseKind<T>,
    // The Hessian is constant, so the noise factor is too.
    factor: NoiseFactor<T>,
}

impl<T: Real> BlockQuadratic<T> {
    /// `lambdas` are the `m` positive curvatures; the remaining `dim - m` are zero.
    pub fn new(lambdas: &[T], dim: usize, noise: NoiseKind<T>) -> Result<Self> {
        if lambdas.is_empty() || lambdas.len() > dim {
            return Err(Error::InvalidConfig(format!(
                "block quadratic needs 1 <= m <= d, got m = {} and d = {dim}",
                lambdas.len()
            )));
        }
        if let Some(l) = lambdas.iter().find(|l| !(**l > T::zero()) || !l.is_finite()) {
            return Err(Error::InvalidConfig(format!("block quadratic curvatures must be positive, got {l}")));
        }
        noise.validate(dim)?;
        let mut d = lambdas.to_vec();
        d.resize(dim, T::zero());
        let factor = noise.factor(&Matrix::from_diag(&d));
        Ok(BlockQuadratic { lambdas: lambdas.to_vec(), dim, noise, factor })
    }

    pub fn rank(&self) -> usize {
        self.lambdas.len()
    }

    pub fn curvatures(&self) -> &[T] {
        &self.lambdas
    }

    pub fn noise(&self) -> &NoiseKind<T> {
        &self.noise
    }

    fn h0(&self) -> Matrix<T> {
        let mut d = self.lambdas.clone();
        d.resize(self.dim, T::zero());
        Matrix::from_diag(&d)
    }
}

impl<T: Real> LossModel<T> for BlockQuadratic<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, th: &[T]) -> T {
        self.lambdas.iter().zip(th).map(|(&l, &x)| l * x * x).sum::<T>() * T::lit(0.5)
    }

    fn grad(&self, th: &[T]) -> Vector<T> {
        let mut g = Vector::zeros(self.dim);
        for (i, &l) in self.lambdas.iter().enumerate() {
            g[i] = l * th[i];
        }
        g
    }

    fn hessian(&self, _th: &[T]) -> Matrix<T> {
        self.h0()
    }

    fn third_contract(&self, _th: &[T], _m: &Matrix<T>) -> Vector<T> {
        Vector::zeros(self.dim)
    }

    fn noise_covariance(&self, _th: &[T]) -> Matrix<T> {
        self.noise.covariance(&self.h0())
    }

    fn sample_noise_sum(&self, _th: &[T], count: usize, rng: &mut dyn RngCore) -> Vector<T> {
        if self.noise.is_zero() {
            return Vector::zeros(self.dim);
        }
        self.factor.sample_sum(self.dim, count, rng)
    }

    fn noise_bound(&self) -> T {
        let lmax = self.lambdas.iter().fold(T::zero(), |a, &l| a.max(l));
        self.noise.bound(self.dim, lmax)
    }

    fn is_noiseless(&self) -> bool {
        self.noise.is_zero()
    }

    fn min_loss(&self) -> Option<T> {
        Some(T::zero())
    }

    fn manifold_hint(&self) -> Option<&dyn ManifoldHint<T>> {
        Some(self)
    }

    fn name(&self) -> &'static str {
        "block"
    }
}

impl<T: Real> ManifoldHint<T> for BlockQuadratic<T> {
    fn contains(&self, theta: &[T], tol: T) -> bool {
        theta[..self.rank()].iter().all(|x| x.abs() <= tol)
    }

    fn dim(&self) -> usize {
        self.dim - self.rank()
    }

    fn point(&self, u: &[T]) -> Vector<T> {
        let mut p = Vector::zeros(self.rank());
        p.0.extend_from_slice(u);
        p
    }
}
