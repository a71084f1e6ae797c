//! Geometry of the minimizer manifold: the gradient-flow projection, tangent
//! projectors, the noise split and the eigenbasis rescalings of the noise.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::models::{eval_grad, LossModel};
use crate::numerics::{big_f, integrate_ode, psi_unchecked, sym_eig_default, OdeOptions, StopRule, SymEig};
use crate::scalar::Real;

/// Gradient-norm tolerance that defines "on the manifold".
pub const EPS_GRAD: f64 = 1e-10;

/// Result of the gradient-flow projection.
#[derive(Debug, Clone, PartialEq)]
pub enum Projection<T> {
    Point(Vector<T>),
    /// The flow did not converge to a validated manifold point.
    Null,
}

impl<T> Projection<T> {
    pub fn point(&self) -> Option<&Vector<T>> {
        match self {
            Projection::Point(p) => Some(p),
            Projection::Null => None,
        }
    }

    pub fn into_point(self) -> Option<Vector<T>> {
        match self {
            Projection::Point(p) => Some(p),
            Projection::Null => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Projection::Null)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectOptions<T> {
    pub eps_grad: T,
    pub ode: OdeOptions<T>,
    /// Accepted gap between the terminal loss and the model's minimum loss.
    pub loss_tol: T,
}

impl<T: Real> Default for ProjectOptions<T> {
    fn default() -> Self {
        let mut ode = OdeOptions::with_tol(T::tol(1e-10));
        ode.max_steps = 200_000;
        ProjectOptions { eps_grad: T::tol(EPS_GRAD), ode, loss_tol: T::tol(1e-8) }
    }
}

/// Gradient-flow projection `Phi(theta)` with default options.
pub fn gf_project<T: Real, M: LossModel<T> + ?Sized>(model: &M, theta: &[T]) -> Projection<T> {
    gf_project_with(model, theta, &ProjectOptions::default())
}

/// Integrates `dx/dt = -grad L(x)` from `theta` until `|grad L| < eps_grad`.
pub fn gf_project_with<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
    opts: &ProjectOptions<T>,
) -> Projection<T> {
    if theta.len() != model.dim() || theta.iter().any(|x| !x.is_finite()) {
        return Projection::Null;
    }
    let field = |x: &[T]| model.grad(x).scale(-T::one());
    let sol = match integrate_ode(field, theta, StopRule::FieldNorm(opts.eps_grad), &opts.ode) {
        Ok(s) => s,
        Err(_) => return Projection::Null,
    };
    if let Some(l0) = model.min_loss() {
        if (model.loss(&sol.state) - l0).abs() > opts.loss_tol {
            return Projection::Null;
        }
    }
    Projection::Point(sol.state)
}

/// A manifold point with its Hessian eigendecomposition and derived noise matrices.
#[derive(Debug, Clone)]
pub struct ManifoldFrame<T> {
    pub zeta: Vector<T>,
    pub eig: SymEig<T>,
    /// Number of eigenvalues above the rank threshold.
    pub rank: usize,
    /// Projector onto the Hessian null space (the tangent space).
    pub p_par: Matrix<T>,
    pub p_perp: Matrix<T>,
    pub sigma: Matrix<T>,
    pub sigma_par: Matrix<T>,
    pub sigma_diamond: Matrix<T>,
    pub hat_sigma_diamond: Matrix<T>,
    pub eta_h: T,
    pub hat_psi: Matrix<T>,
    pub psi: Matrix<T>,
}

/// Builds the frame at `zeta`, which must satisfy `|grad L(zeta)| <= EPS_GRAD`.
pub fn make_frame<T: Real, M: LossModel<T> + ?Sized>(model: &M, zeta: &[T], eta_h: T) -> Result<ManifoldFrame<T>> {
    make_frame_with(model, zeta, eta_h, T::tol(EPS_GRAD))
}

pub fn make_frame_with<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    zeta: &[T],
    eta_h: T,
    eps_grad: T,
) -> Result<ManifoldFrame<T>> {
    if !(eta_h >= T::zero()) || !eta_h.is_finite() {
        return Err(Error::Domain(format!("eta * H must be a finite nonnegative number, got {eta_h}")));
    }
    let g = eval_grad(model, zeta)?;
    let gn = g.norm();
    if gn > eps_grad {
        return Err(Error::OffManifold { grad_norm: gn.to_f64_lossy() });
    }
    let hess = model.hessian(zeta);
    let eig = sym_eig_default(&hess)?;
    let thr = eig.rank_threshold;
    let ten = T::lit(10.0);
    for &l in &eig.eigenvalues {
        if l < -thr {
            return Err(Error::NotMinimizer { eigenvalue: l.to_f64_lossy() });
        }
        if l.abs() > thr / ten && l.abs() < thr * ten {
            return Err(Error::RankAmbiguous { eigenvalue: l.to_f64_lossy(), threshold: thr.to_f64_lossy() });
        }
    }
    let rank = eig.rank();
    let d = eig.dim();
    let p_par = eigen_projector(&eig, true);
    let p_perp = Matrix::identity(d).sub(&p_par);
    let sigma = model.noise_covariance(zeta).symmetrize();
    let sigma_par = p_par.matmul(&sigma).matmul(&p_par).symmetrize();
    let sigma_diamond = sigma.sub(&sigma_par);
    let mut frame = ManifoldFrame {
        zeta: Vector(zeta.to_vec()),
        eig,
        rank,
        p_par,
        p_perp,
        sigma,
        sigma_par,
        sigma_diamond,
        hat_sigma_diamond: Matrix::zeros(d, d),
        eta_h,
        hat_psi: Matrix::zeros(d, d),
        psi: Matrix::zeros(d, d),
    };
    frame.hat_sigma_diamond = v_h(&frame, &frame.sigma_diamond);
    frame.hat_psi = hat_psi(&frame, eta_h);
    frame.psi = psi_matrix(&frame, eta_h);
    Ok(frame)
}

fn eigen_projector<T: Real>(eig: &SymEig<T>, null: bool) -> Matrix<T> {
    let d = eig.dim();
    let v = &eig.eigenvectors;
    let cols: Vec<usize> = (0..d).filter(|&i| eig.is_null(i) == null).collect();
    Matrix::from_fn(d, d, |i, j| cols.iter().map(|&k| v[(i, k)] * v[(j, k)]).sum())
}

/// Rescales `m` in the Hessian eigenbasis: entry `(i, j)` gets `w(lambda_i + lambda_j)`,
/// except the null-null block which is zeroed.
fn rescale_in_eigenbasis<T: Real>(frame: &ManifoldFrame<T>, m: &Matrix<T>, w: impl Fn(T) -> T) -> Matrix<T> {
    let eig = &frame.eig;
    let d = eig.dim();
    let mut c = eig.to_eigenbasis(m);
    for i in 0..d {
        for j in 0..d {
            c[(i, j)] = if eig.is_null(i) && eig.is_null(j) {
                T::zero()
            } else {
                c[(i, j)] * w(eig.effective(i) + eig.effective(j))
            };
        }
    }
    eig.from_eigenbasis(&c).symmetrize()
}

/// `V_H(M)`: eigenbasis entries divided by `lambda_i + lambda_j`, tangent-tangent block removed.
pub fn v_h<T: Real>(frame: &ManifoldFrame<T>, m: &Matrix<T>) -> Matrix<T> {
    rescale_in_eigenbasis(frame, m, |s| T::one() / s)
}

/// `V_H(Sigma_diamond)`.
pub fn hat_sigma_diamond<T: Real>(frame: &ManifoldFrame<T>) -> Matrix<T> {
    v_h(frame, &frame.sigma_diamond)
}

/// Entries `psi(eta_h (lambda_i + lambda_j)) / (lambda_i + lambda_j)` times those of `Sigma_diamond`.
pub fn hat_psi<T: Real>(frame: &ManifoldFrame<T>, eta_h: T) -> Matrix<T> {
    rescale_in_eigenbasis(frame, &frame.sigma_diamond, |s| psi_unchecked(eta_h * s) / s)
}

/// Entries `psi(eta_h (lambda_i + lambda_j))` times those of the full `Sigma`.
pub fn psi_matrix<T: Real>(frame: &ManifoldFrame<T>, eta_h: T) -> Matrix<T> {
    rescale_in_eigenbasis(frame, &frame.sigma, |s| psi_unchecked(eta_h * s))
}

/// Moore-Penrose pseudo-inverse of the Hessian at the frame point.
pub fn hessian_pinv<T: Real>(frame: &ManifoldFrame<T>) -> Matrix<T> {
    let eig = &frame.eig;
    let d = eig.dim();
    let v = &eig.eigenvectors;
    let inv: Vec<T> = (0..d).map(|k| if eig.is_null(k) { T::zero() } else { T::one() / eig.eigenvalues[k] }).collect();
    Matrix::from_fn(d, d, |i, j| (0..d).map(|k| v[(i, k)] * inv[k] * v[(j, k)]).sum())
}

/// Second derivative of the projection, `d^2 Phi(zeta)[M]`.
///
/// The normal-normal and mixed blocks of `M` act through `-P_par grad^3 L[V_H(M)]`;
/// the tangent-tangent block bends along the manifold through
/// `-H^+ grad^3 L[P_par M P_par]`.
pub fn second_diff_phi<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    frame: &ManifoldFrame<T>,
    m: &Matrix<T>,
) -> Result<Vector<T>> {
    let d = frame.eig.dim();
    if m.rows() != d || !m.is_square() {
        return Err(Error::Dimension { expected: d, got: m.rows() });
    }
    m.check_symmetric(T::tol(1e-10))?;
    let ms = m.symmetrize();
    let z = &frame.zeta;
    let normal = model.third_contract(z, &v_h(frame, &ms));
    let mut out = frame.p_par.mul_vec(&normal).scale(-T::one());
    let tt = frame.p_par.matmul(&ms).matmul(&frame.p_par).symmetrize();
    if tt.max_abs() > T::zero() {
        let tangent = model.third_contract(z, &tt);
        out.axpy(-T::one(), &hessian_pinv(frame).mul_vec(&tangent));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sharpness<T> {
    /// `tr grad^2 L(zeta)`.
    pub tr_hess: T,
    /// `sum_i F(2 eta_h lambda_i) / (2 eta_h)` over nonzero eigenvalues.
    pub tr_f_term: T,
}

pub fn sharpness_values<T: Real>(frame: &ManifoldFrame<T>, eta_h: T) -> Result<Sharpness<T>> {
    let eig = &frame.eig;
    let tr_hess: T = (0..eig.dim()).map(|i| eig.effective(i)).sum();
    let mut tr_f_term = T::zero();
    if eta_h > T::zero() {
        let a = T::lit(2.0) * eta_h;
        for i in 0..eig.dim() {
            let l = eig.effective(i);
            if l > T::zero() {
                tr_f_term += big_f(a * l)? / a;
            }
        }
    }
    Ok(Sharpness { tr_hess, tr_f_term })
}
