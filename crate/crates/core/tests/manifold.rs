use approx::assert_abs_diff_eq;
use rand::RngCore;
use slowsde_core::linalg::{Matrix, Vector};
use slowsde_core::manifold::{
    gf_project, gf_project_with, make_frame, second_diff_phi, sharpness_values, ProjectOptions,
};
use slowsde_core::models::{LossModel, QuadraticValley};
use slowsde_core::numerics::{big_f, OdeOptions};

/// `L = (x - a y^2)^2 (1 + y^2) / 2`: a valley bent along the parabola `x = a y^2`.
struct CurvedValley {
    a: f64,
}

impl CurvedValley {
    fn r(&self, th: &[f64]) -> f64 {
        th[0] - self.a * th[1] * th[1]
    }
}

impl LossModel<f64> for CurvedValley {
    fn dim(&self) -> usize {
        2
    }
    fn loss(&self, th: &[f64]) -> f64 {
        let r = self.r(th);
        0.5 * r * r * (1.0 + th[1] * th[1])
    }
    fn grad(&self, th: &[f64]) -> Vector<f64> {
        let (y, r, a) = (th[1], self.r(th), self.a);
        let w = 1.0 + y * y;
        Vector(vec![r * w, -2.0 * a * y * r * w + r * r * y])
    }
    fn hessian(&self, th: &[f64]) -> Matrix<f64> {
        let (y, r, a) = (th[1], self.r(th), self.a);
        let w = 1.0 + y * y;
        let xy = -2.0 * a * y * w + 2.0 * r * y;
        let yy = -2.0 * a * r * w + 4.0 * a * a * y * y * w - 8.0 * a * y * y * r + r * r;
        Matrix::from_row_slice(2, 2, &[w, xy, xy, yy])
    }
    fn third_contract(&self, th: &[f64], m: &Matrix<f64>) -> Vector<f64> {
        let h = 1e-5;
        Vector(
            (0..2)
                .map(|i| {
                    let mut p = th.to_vec();
                    let mut q = th.to_vec();
                    p[i] += h;
                    q[i] -= h;
                    (self.hessian(&p).inner(m) - self.hessian(&q).inner(m)) / (2.0 * h)
                })
                .collect(),
        )
    }
    fn noise_covariance(&self, _th: &[f64]) -> Matrix<f64> {
        Matrix::zeros(2, 2)
    }
    fn sample_noise_sum(&self, _th: &[f64], _count: usize, _rng: &mut dyn RngCore) -> Vector<f64> {
        Vector::zeros(2)
    }
    fn noise_bound(&self) -> f64 {
        0.0
    }
    fn is_noiseless(&self) -> bool {
        true
    }
    fn min_loss(&self) -> Option<f64> {
        Some(0.0)
    }
    fn name(&self) -> &'static str {
        "curved"
    }
}

fn tight() -> ProjectOptions<f64> {
    let mut ode = OdeOptions::with_tol(1e-13);
    ode.max_steps = 1_000_000;
    ProjectOptions { eps_grad: 1e-14, ode, loss_tol: 1e-12 }
}

/// Central second difference of `Phi` along `u`: approximates `d^2 Phi[u u^T]`.
fn fd_second<M: LossModel<f64>>(m: &M, zeta: &[f64], u: &[f64], eps: f64) -> Vec<f64> {
    let opts = tight();
    let shift = |s: f64| {
        let p: Vec<f64> = zeta.iter().zip(u).map(|(z, d)| z + s * d).collect();
        gf_project_with(m, &p, &opts).into_point().expect("projection")
    };
    let (p, c, q) = (shift(eps), shift(0.0), shift(-eps));
    (0..zeta.len()).map(|i| (p[i] - 2.0 * c[i] + q[i]) / (eps * eps)).collect()
}

fn check_second_diff<M: LossModel<f64>>(m: &M, zeta: &[f64]) {
    let frame = make_frame(m, zeta, 1.0).unwrap();
    let n = frame.eig.vector(0);
    let t = frame.eig.vector(1);
    let mixed: Vec<f64> = n.iter().zip(&t).map(|(a, b)| (a + b) / 2f64.sqrt()).collect();
    for u in [n, t, mixed] {
        let analytic = second_diff_phi(m, &frame, &Matrix::outer(&u, &u)).unwrap();
        let fd = fd_second(m, zeta, &u, 1e-4);
        let scale = analytic.norm().max(1e-2);
        for i in 0..2 {
            assert!(
                (analytic[i] - fd[i]).abs() <= 1e-3 * scale.max(1.0),
                "direction {u:?}: analytic {analytic:?} vs fd {fd:?}"
            );
        }
    }
}

#[test]
fn valley_projector_invariants_at_ten_points() {
    let m = QuadraticValley::<f64>::isotropic(1.0).unwrap();
    for i in 0..10 {
        let y = -4.5 + i as f64;
        let f = make_frame(&m, &[0.0, y], 1.0).unwrap();
        let p = &f.p_par;
        assert!(p.matmul(p).sub(p).frobenius() <= 1e-8);
        assert!(p.asymmetry() == 0.0);
        let h = m.hessian(&[0.0, y]);
        assert!(p.matmul(&h).frobenius() <= 1e-6 * h.frobenius());
        assert!(h.matmul(p).frobenius() <= 1e-8);

        let off = [0.05 * (i as f64 - 5.0), y];
        let phi = gf_project(&m, &off).into_point().unwrap();
        let phi2 = gf_project(&m, &phi).into_point().unwrap();
        assert!(phi2.sub(&phi).norm() <= 2e-10);
    }
}

#[test]
fn valley_projection_is_exact_along_the_invariant() {
    let m = QuadraticValley::<f64>::noiseless();
    for (x0, y0) in [(0.1, 1.0), (0.4, 2.0), (-0.3, 0.5)] {
        let p = gf_project(&m, &[x0, y0]).into_point().unwrap();
        let inv = |x: f64, y: f64| y.ln() + 0.5 * y * y - 0.5 * x * x;
        assert_abs_diff_eq!(inv(p[0], p[1]), inv(x0, y0), epsilon = 1e-9);
    }
}

#[test]
fn valley_second_diff_phi() {
    let m = QuadraticValley::<f64>::noiseless();
    let f = make_frame(&m, &[0.0, 1.0], 1.0).unwrap();
    let r = second_diff_phi(&m, &f, &Matrix::from_diag(&[1.0, 0.0])).unwrap();
    assert!((r[0]).abs() <= 1e-6 && (r[1] + 0.5).abs() <= 1e-6);
    let fd = fd_second(&m, &[0.0, 1.0], &[1.0, 0.0], 1e-4);
    assert!((fd[1] + 0.5).abs() <= 5e-4, "{fd:?}");
    for y in [-2.0, 0.5, 1.0, 3.0] {
        check_second_diff(&m, &[0.0, y]);
    }
}

#[test]
fn curved_manifold_second_diff_phi() {
    let m = CurvedValley { a: 0.4 };
    for y in [-1.0f64, 0.3, 1.2] {
        let zeta = [0.4 * y * y, y];
        check_second_diff(&m, &zeta);
    }
}

#[test]
fn projection_derivative_is_tangent_projector() {
    let m = CurvedValley { a: 0.4 };
    let zeta = [0.4 * 0.7 * 0.7, 0.7];
    let f = make_frame(&m, &zeta, 1.0).unwrap();
    let eps = 1e-4;
    let base = gf_project_with(&m, &zeta, &tight()).into_point().unwrap();
    for k in 0..2 {
        let u = f.eig.vector(k);
        let p: Vec<f64> = zeta.iter().zip(&u).map(|(z, d)| z + eps * d).collect();
        let phi = gf_project_with(&m, &p, &tight()).into_point().unwrap();
        let d: Vec<f64> = (0..2).map(|i| (phi[i] - base[i]) / eps).collect();
        let want = f.p_par.mul_vec(&u);
        for i in 0..2 {
            assert!((d[i] - want[i]).abs() <= 1e-3, "{d:?} vs {want:?}");
        }
    }
}

#[test]
fn hessian_aligned_drift_is_trace_gradient() {
    // -(1/2B) P grad^3 L[hat Sigma] equals -(1/4B) of the tangential gradient of tr H.
    let m = QuadraticValley::<f64>::hessian_aligned(1.0).unwrap();
    let b = 3.0f64;
    for y in [-2.0f64, -0.5, 0.7, 2.5] {
        let f = make_frame(&m, &[0.0, y], 1.0).unwrap();
        let lhs = f.p_par.mul_vec(&m.third_contract(&[0.0, y], &f.hat_sigma_diamond)).scale(-0.5 / b);
        let rhs = -(2.0 * y) / (4.0 * b);
        assert!(lhs[0].abs() <= 1e-8);
        assert!((lhs[1] - rhs).abs() <= 1e-8);
    }
}

#[test]
fn hat_psi_increases_towards_hat_sigma() {
    let cov = Matrix::from_f64(2, 2, &[1.0, 0.4, 0.4, 2.0]);
    let m = QuadraticValley::new(slowsde_core::models::NoiseKind::Custom { cov }).unwrap();
    let mut prev = None::<Matrix<f64>>;
    for eh in [0.0f64, 0.1, 0.5, 1.0, 5.0, 50.0] {
        let f = make_frame(&m, &[0.0, 1.0], eh).unwrap();
        let c = f.eig.to_eigenbasis(&f.hat_psi);
        let target = f.eig.to_eigenbasis(&f.hat_sigma_diamond);
        if let Some(p) = &prev {
            for i in 0..4 {
                let (a, b, t): (f64, f64, f64) = (p.as_slice()[i], c.as_slice()[i], target.as_slice()[i]);
                assert!((t - b).abs() <= (t - a).abs() + 1e-15);
            }
        }
        prev = Some(c);
    }
}

#[test]
fn sharpness_f_term_fixture() {
    let m = QuadraticValley::<f64>::noiseless();
    let f = make_frame(&m, &[0.0, 1.0], 1.0).unwrap();
    let s = sharpness_values(&f, 1.0).unwrap();
    assert_abs_diff_eq!(s.tr_f_term, big_f(4.0).unwrap() / 2.0, epsilon = 1e-14);
    assert_abs_diff_eq!(s.tr_f_term, 2.032_710_621_568_727_6 / 2.0, epsilon = 1e-10);
}
