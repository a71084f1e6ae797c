use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use slowsde_core::linalg::Matrix;
use slowsde_core::manifold::make_frame;
use slowsde_core::models::{LossModel, NoiseKind, QuadraticValley};
use slowsde_core::rng::{domain, standard_normal, stream};
use slowsde_core::slowsde::{
    drift_and_diffusion, integrate_slow_sde, integrate_slow_sde_observe, projected_coefficients, step_projected,
    SdeKind, SdeState,
};

fn psi_ref(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        ((-x).exp_m1() + x) / x
    }
}

/// Classical RK4 on a scalar ODE with a fixed step.
fn rk4(f: impl Fn(f64) -> f64, y0: f64, horizon: f64, n: usize) -> f64 {
    let h = horizon / n as f64;
    let mut y = y0;
    for _ in 0..n {
        let k1 = f(y);
        let k2 = f(y + 0.5 * h * k1);
        let k3 = f(y + 0.5 * h * k2);
        let k4 = f(y + h * k3);
        y += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
    }
    y
}

fn final_y(m: &QuadraticValley<f64>, kind: SdeKind<f64>, y0: f64, horizon: f64, dt: f64, seed: u64) -> f64 {
    let r = integrate_slow_sde(m, &kind, &[0.0, y0], horizon, dt, seed, 1_000_000).unwrap();
    r.points.last().unwrap().theta[1]
}

#[test]
fn label_noise_local_matches_ode_oracle() {
    let m = QuadraticValley::<f64>::noiseless();
    let (b, k, eh) = (2.0, 4.0, 0.3);
    let kind = SdeKind::LabelNoiseLocal { b, k, eta_h: eh };
    let oracle = rk4(|y| -y * (1.0 + (k - 1.0) * psi_ref(2.0 * eh * (1.0 + y * y))) / (2.0 * b), 1.5, 1.0, 10_000);
    let y = final_y(&m, kind, 1.5, 1.0, 1e-4, 0);
    assert_abs_diff_eq!(y, oracle, epsilon = 2e-4);
}

#[test]
fn label_noise_local_inf_decays_exponentially() {
    let m = QuadraticValley::<f64>::noiseless();
    let (b, k) = (2.0, 3.0);
    let y = final_y(&m, SdeKind::LabelNoiseLocalInf { b, k }, 2.0, 1.0, 1e-4, 0);
    assert_abs_diff_eq!(y, 2.0 * (-k / (2.0 * b)).exp(), epsilon = 2e-4);
    let y = final_y(&m, SdeKind::LabelNoiseSgd { b }, 2.0, 1.0, 1e-4, 0);
    assert_abs_diff_eq!(y, 2.0 * (-1.0 / (2.0 * b)).exp(), epsilon = 2e-4);
}

#[test]
fn label_noise_local_sits_between_sgd_and_infinite_horizon() {
    let m = QuadraticValley::<f64>::noiseless();
    let (b, k) = (1.0, 4.0);
    let sgd = final_y(&m, SdeKind::LabelNoiseSgd { b }, 1.0, 0.5, 1e-3, 0);
    let inf = final_y(&m, SdeKind::LabelNoiseLocalInf { b, k }, 1.0, 0.5, 1e-3, 0);
    let mut prev = sgd;
    for eh in [0.01, 0.1, 1.0, 10.0] {
        let y = final_y(&m, SdeKind::LabelNoiseLocal { b, k, eta_h: eh }, 1.0, 0.5, 1e-3, 0);
        assert!(y < prev && y > inf, "etaH = {eh}: {y}");
        prev = y;
    }
}

#[test]
fn isotropic_valley_drift_closed_form() {
    let s2 = 0.8;
    let m = QuadraticValley::<f64>::isotropic(s2).unwrap();
    let b = 4.0;
    for y in [-1.5, 0.3, 2.0] {
        let f = make_frame(&m, &[0.0, y], 0.0).unwrap();
        let (drift, pa) = projected_coefficients(&m, &f, &SdeKind::Sgd { b }).unwrap();
        assert_abs_diff_eq!(drift[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(drift[1], -s2 * y / (2.0 * b * (1.0 + y * y)), epsilon = 1e-12);
        assert_abs_diff_eq!(pa[(1, 1)].abs(), (s2 / b).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(pa[(0, 0)], 0.0, epsilon = 1e-12);
    }
}

#[test]
fn pure_diffusion_increments_and_variance() {
    let cov = Matrix::from_f64(2, 2, &[0.0, 0.0, 0.0, 1.0]);
    let m = QuadraticValley::new(NoiseKind::Custom { cov }).unwrap();
    let (b, dt) = (4.0f64, 0.01f64);
    let kind = SdeKind::Sgd { b };

    let s0 = SdeState { zeta: slowsde_core::linalg::Vector(vec![0.0, 0.5]), t: 0.0, step: 3 };
    let s1 = step_projected(&m, &s0, &kind, dt, 11).unwrap();
    let mut rng = stream(11, &[domain::SDE, 3]);
    let _: f64 = standard_normal(&mut rng);
    let n1: f64 = standard_normal(&mut rng);
    // Sigma_par^(1/2) = e_y e_y^T, so only the second normal moves y.
    assert_abs_diff_eq!(s1.zeta[1] - 0.5, n1 * dt.sqrt() / b.sqrt(), epsilon = 1e-15);
    assert_eq!(s1.zeta[0], 0.0);
    assert_eq!(s1.step, 4);

    let horizon = 0.1;
    let n = 4000;
    let ends: Vec<f64> = (0..n).map(|seed| final_y(&m, kind, 0.5, horizon, dt, seed) - 0.5).collect();
    let mean = ends.iter().sum::<f64>() / n as f64;
    let var = ends.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let want = horizon / b;
    // Sample variance has relative standard error sqrt(2 / n).
    assert!((var - want).abs() <= 5.0 * want * (2.0 / n as f64).sqrt(), "var {var} vs {want}");
    assert!(mean.abs() <= 5.0 * (want / n as f64).sqrt());
}

#[test]
fn sde_paths_stay_on_the_manifold() {
    let m = QuadraticValley::<f64>::isotropic(1.0).unwrap();
    let kinds = [
        SdeKind::Sgd { b: 2.0 },
        SdeKind::Local { b: 2.0, k: 4.0, eta_h: 0.5 },
        SdeKind::Kappa { kappa1: 0.5, kappa2: 0.25 },
        SdeKind::LocalInf { b: 2.0, k: 4.0 },
    ];
    for kind in kinds {
        integrate_slow_sde_observe(&m, &kind, &[0.0, 1.0], 0.5, 1e-3, 5, |_, st| {
            assert!(m.grad(&st.zeta).norm() <= 1e-10, "{kind:?} left the manifold at {:?}", st.zeta);
            true
        })
        .unwrap();
    }
}

#[test]
fn integration_is_deterministic_per_seed() {
    let m = QuadraticValley::<f64>::isotropic(1.0).unwrap();
    let kind = SdeKind::Local { b: 1.0, k: 2.0, eta_h: 1.0 };
    let a = integrate_slow_sde(&m, &kind, &[0.0, 1.0], 0.2, 1e-3, 9, 10).unwrap();
    let b = integrate_slow_sde(&m, &kind, &[0.0, 1.0], 0.2, 1e-3, 9, 10).unwrap();
    let c = integrate_slow_sde(&m, &kind, &[0.0, 1.0], 0.2, 1e-3, 10, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.points.last().unwrap().theta, c.points.last().unwrap().theta);
    assert_eq!(a.points.len(), 21);
}

#[test]
fn local_drift_grows_with_period_towards_infinite_limit() {
    let m = QuadraticValley::<f64>::hessian_aligned(1.0).unwrap();
    let f = make_frame(&m, &[0.0, 1.0], 0.0).unwrap();
    let (b, k) = (2.0, 4.0);
    let sgd = drift_and_diffusion(&m, &f, &SdeKind::Sgd { b }).unwrap().b[1];
    let inf = drift_and_diffusion(&m, &f, &SdeKind::LocalInf { b, k }).unwrap().b[1];
    assert_abs_diff_eq!(inf, k * sgd, epsilon = 1e-14);
    let mut prev = sgd;
    for eh in [0.1, 1.0, 10.0, 100.0] {
        let d = drift_and_diffusion(&m, &f, &SdeKind::Local { b, k, eta_h: eh }).unwrap().b[1];
        assert!(d < prev && d > inf);
        prev = d;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn lsr_rescaling_invariance(y in -3.0f64..3.0, kappa in 0.25f64..8.0, b in 0.5f64..16.0, k in 1.0f64..16.0, eh in 0.01f64..20.0) {
        let cov = Matrix::from_f64(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let m = QuadraticValley::new(NoiseKind::Custom { cov }).unwrap();
        let f = make_frame(&m, &[0.0, y], eh).unwrap();
        let scaled = drift_and_diffusion(&m, &f, &SdeKind::Local { b: kappa * b, k: kappa * k, eta_h: eh }).unwrap().time_rescaled(kappa);
        let lsr = drift_and_diffusion(&m, &f, &SdeKind::LocalLsr { b, k, kappa, eta_h: eh }).unwrap();
        let scale = 1.0 + lsr.b.norm();
        prop_assert!(scaled.b.sub(&lsr.b).norm() <= 1e-12 * scale);
        prop_assert!(scaled.a.sub(&lsr.a).max_abs() <= 1e-12 * (1.0 + lsr.a.max_abs()));
    }

    #[test]
    fn label_noise_kinds_have_no_diffusion(y in -3.0f64..3.0) {
        let m = QuadraticValley::<f64>::noiseless();
        let f = make_frame(&m, &[0.0, y], 1.0).unwrap();
        for kind in [SdeKind::LabelNoiseSgd { b: 1.0 }, SdeKind::LabelNoiseLocal { b: 1.0, k: 2.0, eta_h: 1.0 }, SdeKind::LabelNoiseLocalInf { b: 1.0, k: 2.0 }] {
            prop_assert_eq!(drift_and_diffusion(&m, &f, &kind).unwrap().a.max_abs(), 0.0);
        }
    }
}
