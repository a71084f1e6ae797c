use rand::RngCore;

use super::{LossModel, ManifoldHint, NoiseKind};
use crate::error::Result;
use crate::linalg::{Matrix, Vector};
use crate::scalar::Real;

/// Spectral-norm bound on the Hessian over the working region `|x| <= 1, |y| <= 10`.
const REGION_HESS_BOUND: f64 = 110.0;

/// `L(x, y) = x^2 (1 + y^2) / 2` on `R^2`.
///
/// The minimizer manifold is the line `x = 0`, where the Hessian is
/// `diag(1 + y^2, 0)`. The manifold is unbounded; experiments keep `|y| <= 10`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticValley<T> {
    pub noise: NoiseKind<T>,
}

impl<T: Real> QuadraticValley<T> {
    pub fn new(noise: NoiseKind<T>) -> Result<Self> {
        noise.validate(2)?;
        Ok(QuadraticValley { noise })
    }

    pub fn noiseless() -> Self {
        QuadraticValley { noise: NoiseKind::none() }
    }

    pub fn isotropic(sigma2: T) -> Result<Self> {
        Self::new(NoiseKind::Isotropic { sigma2 })
    }

    pub fn hessian_aligned(c: T) -> Result<Self> {
        Self::new(NoiseKind::HessianAligned { c })
    }
}

impl<T: Real> LossModel<T> for QuadraticValley<T> {
    fn dim(&self) -> usize {
        2
    }

    fn loss(&self, th: &[T]) -> T {
        let (x, y) = (th[0], th[1]);
        T::lit(0.5) * x * x * (T::one() + y * y)
    }

    fn grad(&self, th: &[T]) -> Vector<T> {
        let (x, y) = (th[0], th[1]);
        Vector(vec![x * (T::one() + y * y), x * x * y])
    }

    fn hessian(&self, th: &[T]) -> Matrix<T> {
        let (x, y) = (th[0], th[1]);
        let two = T::lit(2.0);
        Matrix::from_row_slice(2, 2, &[T::one() + y * y, two * x * y, two * x * y, x * x])
    }

    fn third_contract(&self, th: &[T], m: &Matrix<T>) -> Vector<T> {
        // Nonzero third derivatives: L_xxy = 2y, L_xyy = 2x.
        let (x, y) = (th[0], th[1]);
        let two = T::lit(2.0);
        let mxy = (m[(0, 1)] + m[(1, 0)]) * T::lit(0.5);
        Vector(vec![
            two * two * y * mxy + two * x * m[(1, 1)],
            two * y * m[(0, 0)] + two * two * x * mxy,
        ])
    }

    fn noise_covariance(&self, th: &[T]) -> Matrix<T> {
        self.noise.covariance(&self.hessian(th))
    }

    fn sample_noise_sum(&self, th: &[T], count: usize, rng: &mut dyn RngCore) -> Vector<T> {
        match self.noise {
            NoiseKind::HessianAligned { .. } => self.noise.sample_sum(&self.hessian(th), count, rng),
            _ => self.noise.sample_sum(&Matrix::zeros(2, 2), count, rng),
        }
    }

    fn noise_bound(&self) -> T {
        self.noise.bound(2, T::lit(REGION_HESS_BOUND))
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
        "valley"
    }
}

impl<T: Real> ManifoldHint<T> for QuadraticValley<T> {
    fn contains(&self, theta: &[T], tol: T) -> bool {
        theta[0].abs() <= tol
    }

    fn dim(&self) -> usize {
        1
    }

    fn point(&self, u: &[T]) -> Vector<T> {
        Vector(vec![T::zero(), u[0]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{eval_grad, eval_hessian, eval_loss, fd, third_contract};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        let m = QuadraticValley::<f64>::noiseless();
        assert_eq!(eval_loss(&m, &[2.0, 1.0]).unwrap(), 4.0);
        assert_eq!(eval_loss(&m, &[0.0, 7.0]).unwrap(), 0.0);
        assert_eq!(eval_grad(&m, &[1.0, 0.0]).unwrap().0, vec![1.0, 0.0]);
        assert_eq!(eval_grad(&m, &[1.0, 1.0]).unwrap().0, vec![2.0, 1.0]);
        assert_eq!(eval_hessian(&m, &[0.0, 2.0]).unwrap(), Matrix::from_diag(&[5.0, 0.0]));
        assert_eq!(eval_hessian(&m, &[1.0, 1.0]).unwrap().as_slice(), &[2.0, 2.0, 2.0, 1.0]);
    }

    #[test]
    fn third_contract_examples() {
        let m = QuadraticValley::<f64>::noiseless();
        let v = third_contract(&m, &[0.0, 1.0], &Matrix::identity(2)).unwrap();
        assert_eq!(v.0, vec![0.0, 2.0]);
        let swap = Matrix::from_f64(2, 2, &[0., 1., 1., 0.]);
        assert_eq!(third_contract(&m, &[0.0, 1.0], &swap).unwrap().0, vec![4.0, 0.0]);
        let asym = Matrix::from_f64(2, 2, &[0., 1., 0., 0.]);
        assert!(third_contract(&m, &[0.0, 1.0], &asym).is_err());
    }

    #[test]
    fn rejects_bad_points() {
        let m = QuadraticValley::<f64>::noiseless();
        assert!(eval_loss(&m, &[f64::NAN, 0.0]).is_err());
        assert!(eval_grad(&m, &[1.0]).is_err());
    }

    #[test]
    fn zero_noise_stochastic_gradient_is_exact() {
        let m = QuadraticValley::<f64>::isotropic(0.0).unwrap();
        let mut rng = crate::rng::stream(1, &[]);
        let g = crate::models::sample_stoch_grad(&m, &[0.3, -1.2], 4, &mut rng).unwrap();
        assert_eq!(g, m.grad(&[0.3, -1.2]));
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(x in -2.0f64..2.0, y in -3.0f64..3.0,
                                                a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
            let m = QuadraticValley::<f64>::noiseless();
            let th = [x, y];
            let g = m.grad(&th);
            for (gi, fi) in g.iter().zip(fd::grad(&m, &th)) {
                prop_assert!((gi - fi).abs() < 1e-5 * (1.0 + gi.abs()));
            }
            let h = m.hessian(&th);
            let hf = fd::hessian(&m, &th);
            prop_assert!(h.sub(&hf).max_abs() < 1e-5 * (1.0 + h.max_abs()));
            let mm = Matrix::from_f64(2, 2, &[a, b, b, c]);
            let t = m.third_contract(&th, &mm);
            for (ti, fi) in t.iter().zip(fd::third(&m, &th, &mm)) {
                prop_assert!((ti - fi).abs() < 1e-4);
            }
        }

        #[test]
        fn gradient_vanishes_on_manifold(y in -10.0f64..10.0) {
            let m = QuadraticValley::<f64>::noiseless();
            let p = m.point(&[y]);
            prop_assert!(m.grad(&p).norm() <= 1e-10);
            assert_abs_diff_eq!(m.hessian(&p).trace(), 1.0 + y * y, epsilon = 1e-12);
        }
    }
}
