//! Toy loss landscapes with closed-form derivatives and configurable
//! gradient noise.
//!
//! Every optimizer and slow SDE in the crate talks to a landscape only through
//! [`LossModel`]. The free functions in this module (`eval_loss`, `eval_grad`,
//! ...) validate their inputs and then delegate to the trait.

mod block;
mod softmax;
mod valley;

pub use block::BlockQuadratic;
pub use softmax::SoftmaxLabelNoise;
pub use valley::QuadraticValley;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::numerics::psd_sqrt;
use crate::rng::truncated_normal;
use crate::scalar::Real;

/// Gaussian draws used for model noise are truncated at this many standard deviations.
pub const NOISE_TRUNCATION: f64 = 6.0;

/// Structure of the per-sample gradient noise `z` (with `E z = 0`, `Cov z = Sigma(theta)`).
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind<T> {
    /// `Sigma = sigma2 * I`.
    Isotropic { sigma2: T },
    /// `Sigma(theta) = c * (PSD part of Hessian(theta))`.
    HessianAligned { c: T },
    /// Constant covariance.
    Custom { cov: Matrix<T> },
}

impl<T: Real> NoiseKind<T> {
    pub fn none() -> Self {
        NoiseKind::Isotropic { sigma2: T::zero() }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            NoiseKind::Isotropic { sigma2 } => *sigma2 == T::zero(),
            NoiseKind::HessianAligned { c } => *c == T::zero(),
            NoiseKind::Custom { cov } => cov.max_abs() == T::zero(),
        }
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        match self {
            NoiseKind::Isotropic { sigma2 } if !(*sigma2 >= T::zero()) => {
                Err(Error::InvalidConfig(format!("isotropic noise variance must be >= 0, got {sigma2}")))
            }
            NoiseKind::HessianAligned { c } if !(*c >= T::zero()) => {
                Err(Error::InvalidConfig(format!("hessian-aligned noise scale must be >= 0, got {c}")))
            }
            NoiseKind::Custom { cov } => {
                if cov.rows() != dim {
                    return Err(Error::Dimension { expected: dim, got: cov.rows() });
                }
                cov.check_symmetric(T::tol(1e-10))?;
                let eig = crate::numerics::sym_eig(cov, T::zero())?;
                let min = eig.eigenvalues.last().copied().unwrap_or(T::zero());
                if min < -T::tol(1e-10) * T::one().max(cov.max_abs()) {
                    return Err(Error::InvalidConfig(format!("custom noise covariance is not PSD (min eigenvalue {min})")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Covariance at a point with Hessian `hess`.
    pub fn covariance(&self, hess: &Matrix<T>) -> Matrix<T> {
        match self {
            NoiseKind::Isotropic { sigma2 } => Matrix::identity(hess.rows()).scale(*sigma2),
            NoiseKind::HessianAligned { c } => {
                let root = psd_sqrt(hess).expect("finite symmetric Hessian");
                root.matmul(&root).scale(*c)
            }
            NoiseKind::Custom { cov } => cov.clone(),
        }
    }

    /// Matrix `A` with `A A^T = Sigma`, so that `z = A g` for standard `g`.
    pub fn factor(&self, hess: &Matrix<T>) -> NoiseFactor<T> {
        match self {
            NoiseKind::Isotropic { sigma2 } => NoiseFactor::Scalar(sigma2.sqrt()),
            NoiseKind::HessianAligned { c } => {
                NoiseFactor::Dense(psd_sqrt(hess).expect("finite symmetric Hessian").scale(c.sqrt()))
            }
            NoiseKind::Custom { cov } => NoiseFactor::Dense(psd_sqrt(cov).expect("validated covariance")),
        }
    }

    /// Sum of `count` independent noise draws.
    pub fn sample_sum(&self, hess: &Matrix<T>, count: usize, rng: &mut dyn RngCore) -> Vector<T> {
        if self.is_zero() {
            return Vector::zeros(hess.rows());
        }
        self.factor(hess).sample_sum(hess.rows(), count, rng)
    }

    /// Upper bound on `|z|` for Hessians with spectral norm at most `hess_bound`.
    pub fn bound(&self, dim: usize, hess_bound: T) -> T {
        let trunc = T::lit(NOISE_TRUNCATION) * T::from_count(dim).sqrt();
        match self {
            NoiseKind::Isotropic { sigma2 } => sigma2.sqrt() * trunc,
            NoiseKind::HessianAligned { c } => (*c * hess_bound).sqrt() * trunc,
            NoiseKind::Custom { cov } => {
                let eig = crate::numerics::sym_eig(cov, T::zero()).expect("validated covariance");
                eig.eigenvalues[0].max(T::zero()).sqrt() * trunc
            }
        }
    }
}

/// Noise square-root factor, kept scalar when possible.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseFactor<T> {
    Scalar(T),
    Dense(Matrix<T>),
}

impl<T: Real> NoiseFactor<T> {
    /// Sum of `count` draws `A g` with `g` truncated standard normal in `R^d`.
    pub fn sample_sum(&self, d: usize, count: usize, rng: &mut dyn RngCore) -> Vector<T> {
        let mut sum = Vector::zeros(d);
        let mut g = vec![T::zero(); d];
        for _ in 0..count {
            for gi in g.iter_mut() {
                *gi = truncated_normal(rng, NOISE_TRUNCATION);
            }
            match self {
                NoiseFactor::Scalar(s) => sum.axpy(*s, &g),
                NoiseFactor::Dense(a) => sum.axpy(T::one(), &a.mul_vec(&g)),
            }
        }
        sum
    }
}

/// Analytic description of the minimizer manifold, used by tests and harness oracles.
pub trait ManifoldHint<T: Real>: Send + Sync {
    /// Whether `theta` lies on the declared manifold (within `tol`).
    fn contains(&self, theta: &[T], tol: T) -> bool;
    /// Manifold dimension `d - m`.
    fn dim(&self) -> usize;
    /// A manifold point parameterised by `u` (length `dim()`).
    fn point(&self, u: &[T]) -> Vector<T>;
}

/// Oracle bundle for a loss landscape `L(theta) = E[l(theta; xi)]`.
///
/// Implementations assume validated input (correct length, finite entries).
pub trait LossModel<T: Real>: Send + Sync {
    fn dim(&self) -> usize;
    fn loss(&self, theta: &[T]) -> T;
    fn grad(&self, theta: &[T]) -> Vector<T>;
    fn hessian(&self, theta: &[T]) -> Matrix<T>;
    /// `nabla^3 L(theta)[M]`: component `i` is `sum_jk d^3L/(d_i d_j d_k) M_jk`.
    fn third_contract(&self, theta: &[T], m: &Matrix<T>) -> Vector<T>;
    /// `Sigma(theta) = Cov[nabla l(theta; xi)]`.
    fn noise_covariance(&self, theta: &[T]) -> Matrix<T>;
    /// Sum of `count` i.i.d. noise vectors at `theta`.
    fn sample_noise_sum(&self, theta: &[T], count: usize, rng: &mut dyn RngCore) -> Vector<T>;
    /// Declared bound `sigma_max` on a single noise vector.
    fn noise_bound(&self) -> T;
    /// Whether every noise draw is identically zero.
    fn is_noiseless(&self) -> bool;

    /// Single noise draw.
    fn sample_noise(&self, theta: &[T], rng: &mut dyn RngCore) -> Vector<T> {
        self.sample_noise_sum(theta, 1, rng)
    }

    /// Size of the finite training set, when the noise comes from one.
    fn dataset_size(&self) -> Option<usize> {
        None
    }

    /// Noise of the per-sample gradient of datum `index`.
    fn sample_noise_at(&self, theta: &[T], index: usize, rng: &mut dyn RngCore) -> Vector<T> {
        let _ = index;
        self.sample_noise(theta, rng)
    }

    /// Loss value on the minimizer manifold, if known.
    fn min_loss(&self) -> Option<T> {
        None
    }

    fn manifold_hint(&self) -> Option<&dyn ManifoldHint<T>> {
        None
    }

    /// Short identifier for file names and reports.
    fn name(&self) -> &'static str;
}

fn check_point<T: Real>(dim: usize, theta: &[T]) -> Result<()> {
    if theta.len() != dim {
        return Err(Error::Dimension { expected: dim, got: theta.len() });
    }
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("parameter vector".into()));
    }
    Ok(())
}

pub fn eval_loss<T: Real, M: LossModel<T> + ?Sized>(model: &M, theta: &[T]) -> Result<T> {
    check_point(model.dim(), theta)?;
    Ok(model.loss(theta))
}

pub fn eval_grad<T: Real, M: LossModel<T> + ?Sized>(model: &M, theta: &[T]) -> Result<Vector<T>> {
    check_point(model.dim(), theta)?;
    Ok(model.grad(theta))
}

pub fn eval_hessian<T: Real, M: LossModel<T> + ?Sized>(model: &M, theta: &[T]) -> Result<Matrix<T>> {
    check_point(model.dim(), theta)?;
    Ok(model.hessian(theta))
}

pub fn third_contract<T: Real, M: LossModel<T> + ?Sized>(model: &M, theta: &[T], m: &Matrix<T>) -> Result<Vector<T>> {
    check_point(model.dim(), theta)?;
    if m.rows() != model.dim() || !m.is_square() {
        return Err(Error::Dimension { expected: model.dim(), got: m.rows() });
    }
    m.check_symmetric(T::tol(1e-10))?;
    Ok(model.third_contract(theta, m))
}

pub fn noise_covariance<T: Real, M: LossModel<T> + ?Sized>(model: &M, theta: &[T]) -> Result<Matrix<T>> {
    check_point(model.dim(), theta)?;
    Ok(model.noise_covariance(theta))
}

/// Minibatch stochastic gradient `nabla L(theta) + (1/B) sum_i z_i`.
pub fn sample_stoch_grad<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
    batch: usize,
    rng: &mut dyn RngCore,
) -> Result<Vector<T>> {
    check_point(model.dim(), theta)?;
    if batch == 0 {
        return Err(Error::InvalidConfig("batch size must be >= 1".into()));
    }
    Ok(stoch_grad_unchecked(model, theta, batch, rng))
}

pub(crate) fn stoch_grad_unchecked<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
    batch: usize,
    rng: &mut dyn RngCore,
) -> Vector<T> {
    let mut g = model.grad(theta);
    if model.is_noiseless() {
        return g;
    }
    let noise = model.sample_noise_sum(theta, batch, rng);
    g.axpy(T::one() / T::from_count(batch), &noise);
    g
}

/// Stochastic gradient from an explicit batch of datum indices.
pub(crate) fn stoch_grad_indexed<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
    indices: &[usize],
    rng: &mut dyn RngCore,
) -> Vector<T> {
    let mut g = model.grad(theta);
    if model.is_noiseless() {
        return g;
    }
    let mut sum = Vector::zeros(theta.len());
    for &i in indices {
        sum.axpy(T::one(), &model.sample_noise_at(theta, i, rng));
    }
    g.axpy(T::one() / T::from_count(indices.len()), &sum);
    g
}

#[cfg(test)]
pub(crate) mod fd {
    //! Finite-difference oracles shared by the model tests.
    use super::*;

    pub fn grad<M: LossModel<f64>>(m: &M, x: &[f64]) -> Vec<f64> {
        let h = 1e-6 * (1.0 + Vector(x.to_vec()).norm());
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                let mut q = x.to_vec();
                p[i] += h;
                q[i] -= h;
                (m.loss(&p) - m.loss(&q)) / (2.0 * h)
            })
            .collect()
    }

    pub fn hessian<M: LossModel<f64>>(m: &M, x: &[f64]) -> Matrix<f64> {
        let d = x.len();
        let h = 1e-6 * (1.0 + Vector(x.to_vec()).norm());
        let mut out = Matrix::zeros(d, d);
        for j in 0..d {
            let mut p = x.to_vec();
            let mut q = x.to_vec();
            p[j] += h;
            q[j] -= h;
            let gp = m.grad(&p);
            let gq = m.grad(&q);
            for i in 0..d {
                out[(i, j)] = (gp[i] - gq[i]) / (2.0 * h);
            }
        }
        out
    }

    /// `sum_jk dH_ij/dx_k ... ` contracted: component i = sum_{jk} d/dx_i H_jk M_jk.
    pub fn third<M: LossModel<f64>>(m: &M, x: &[f64], mm: &Matrix<f64>) -> Vec<f64> {
        let h = 1e-5 * (1.0 + Vector(x.to_vec()).norm());
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                let mut q = x.to_vec();
                p[i] += h;
                q[i] -= h;
                (m.hessian(&p).inner(mm) - m.hessian(&q).inner(mm)) / (2.0 * h)
            })
            .collect()
    }
}
