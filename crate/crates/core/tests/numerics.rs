#![allow(clippy::excessive_precision)]

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use slowsde_core::linalg::{Matrix, Vector};
use slowsde_core::models::{LossModel, QuadraticValley};
use slowsde_core::numerics::{big_f, integrate_ode, matrix_fn, psi, sym_eig, OdeOptions, StopRule};

// Reference values computed with 30-digit arbitrary-precision quadrature.
const F_REF: [(f64, f64); 6] = [
    (0.1, 0.002_445_469_673_122_157_6),
    (1.0, 0.203_400_400_702_946_865_7),
    (2.0, 0.680_736_643_830_460_710_4),
    (4.0, 2.032_710_621_568_727_614),
    (5.0, 2.812_198_127_073_091_439),
    (20.0, 16.427_052_061_446_120_89),
];

// Valley flow from (0.1, 1) conserves ln y + y^2/2 - x^2/2.
const Y_INF: f64 = 0.997_500_002_609_051_091_5;

fn char_poly_roots_3x3(a: &Matrix<f64>) -> Vec<f64> {
    // det(A - t I) = -t^3 + c2 t^2 - c1 t + c0
    let c2 = a.trace();
    let c1 = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)] + a[(0, 0)] * a[(2, 2)] - a[(0, 2)] * a[(2, 0)]
        + a[(1, 1)] * a[(2, 2)]
        - a[(1, 2)] * a[(2, 1)];
    let c0 = a[(0, 0)] * (a[(1, 1)] * a[(2, 2)] - a[(1, 2)] * a[(2, 1)]) - a[(0, 1)] * (a[(1, 0)] * a[(2, 2)] - a[(1, 2)] * a[(2, 0)])
        + a[(0, 2)] * (a[(1, 0)] * a[(2, 1)] - a[(1, 1)] * a[(2, 0)]);
    let p = |t: f64| -t * t * t + c2 * t * t - c1 * t + c0;
    // Brute-force scan for sign changes, then bisection.
    let bound = 1.0 + a.max_abs() * 3.0 + 0.012_345_678_9;
    let n = 200_000;
    let mut roots = Vec::new();
    let mut prev = p(-bound);
    for i in 1..=n {
        let t = -bound + 2.0 * bound * i as f64 / n as f64;
        let cur = p(t);
        if prev.signum() != cur.signum() {
            let (mut lo, mut hi) = (t - 2.0 * bound / n as f64, t);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if p(lo).signum() == p(mid).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev = cur;
    }
    roots.sort_by(|a, b| b.partial_cmp(a).unwrap());
    roots
}

fn sym_from(vals: &[f64], n: usize) -> Matrix<f64> {
    let mut m = Matrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = vals[k];
            m[(j, i)] = vals[k];
            k += 1;
        }
    }
    m
}

#[test]
fn eigenvalues_match_characteristic_polynomial_roots() {
    let cases = [
        [2.0, -1.0, 0.5, 3.0, 0.25, 1.0],
        [0.3, 0.7, -0.2, -1.1, 0.4, 2.2],
        [1.0, 0.0, 0.0, 2.0, 0.0, 3.0],
    ];
    for c in cases {
        let m = sym_from(&c, 3);
        let e = sym_eig(&m, 1e-8).unwrap();
        let roots = char_poly_roots_3x3(&m);
        assert_eq!(roots.len(), 3);
        for (l, r) in e.eigenvalues.iter().zip(&roots) {
            assert_abs_diff_eq!(*l, *r, epsilon = 1e-9);
        }
    }
}

#[test]
fn eigenvalues_match_nalgebra() {
    let vals: Vec<f64> = (0..15).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
    let m = sym_from(&vals, 5);
    let e = sym_eig(&m, 1e-8).unwrap();
    let na = nalgebra::DMatrix::from_row_slice(5, 5, m.as_slice());
    let mut want: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
    want.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for (l, w) in e.eigenvalues.iter().zip(&want) {
        assert_abs_diff_eq!(*l, *w, epsilon = 1e-12);
    }
}

#[test]
fn integrator_matches_tight_oracle_on_valley_flow() {
    let v = QuadraticValley::<f64>::noiseless();
    let field = |x: &[f64]| v.grad(x).scale(-1.0);
    let sol = integrate_ode(field, &[0.1, 1.0], StopRule::FieldNorm(1e-10), &OdeOptions::with_tol(1e-10)).unwrap();
    let mut tight = OdeOptions::with_tol(1e-13);
    tight.max_step = Some(0.05);
    let oracle = integrate_ode(field, &[0.1, 1.0], StopRule::FieldNorm(1e-10), &tight).unwrap();
    assert!(sol.state[0].abs() < 1e-8);
    assert_abs_diff_eq!(sol.state[1], oracle.state[1], epsilon = 1e-7);
    assert_abs_diff_eq!(oracle.state[1], Y_INF, epsilon = 1e-9);
}

#[test]
fn big_f_matches_reference_quadrature() {
    for (x, want) in F_REF {
        assert_abs_diff_eq!(big_f(x).unwrap(), want, epsilon = 1e-10);
    }
    let r = big_f(50.0).unwrap() / 50.0;
    assert!((0.9..=1.0).contains(&r), "F(50)/50 = {r}");
}

#[test]
fn big_f_derivative_is_psi() {
    let h = 1e-5;
    for x in [0.1f64, 1.0, 5.0, 20.0] {
        let d = (big_f(x + h).unwrap() - big_f(x - h).unwrap()) / (2.0 * h);
        assert!((d - psi(x).unwrap()).abs() <= 1e-6, "x = {x}: {d}");
    }
}

#[test]
fn psi_of_matrix_example() {
    let e = sym_eig(&Matrix::from_diag(&[2.0, 0.0]), 1e-8).unwrap();
    let m = matrix_fn(&e, |l: f64| psi(2.0 * l).unwrap()).unwrap();
    assert_abs_diff_eq!(m[(0, 0)], 0.754_578_909_722_183_5, epsilon = 1e-12);
    assert_eq!(m[(1, 1)], 0.0);
    assert_eq!(m[(0, 1)], 0.0);
}

#[test]
fn single_precision_psi_and_f() {
    assert!((psi(1.0f32).unwrap() - (-1.0f32).exp()).abs() < 1e-6);
    assert!((big_f(1.0f32).unwrap() - 0.203_400_4).abs() < 1e-5);
}

proptest! {
    #[test]
    fn psi_is_monotone_and_bounded(a in 0.0f64..100.0, b in 0.0f64..100.0) {
        prop_assume!(a < b);
        let (pa, pb) = (psi(a).unwrap(), psi(b).unwrap());
        prop_assert!(pa < pb);
        prop_assert!((0.0..1.0).contains(&pa) && (0.0..1.0).contains(&pb));
    }

    #[test]
    fn psi_small_argument_series(x in 0.0f64..1e-3) {
        let series = x / 2.0 - x * x / 6.0 + x * x * x / 24.0;
        prop_assert!((psi(x).unwrap() - series).abs() <= 1e-12);
    }

    #[test]
    fn eig_reconstructs_and_is_orthonormal(vals in prop::collection::vec(-10.0f64..10.0, 15)) {
        let m = sym_from(&vals, 5);
        let e = sym_eig(&m, 1e-8).unwrap();
        let rec = e.reconstruct();
        prop_assert!(rec.sub(&m).frobenius() <= 1e-8 * m.frobenius().max(1.0));
        let vtv = e.eigenvectors.transpose().matmul(&e.eigenvectors);
        prop_assert!(vtv.sub(&Matrix::identity(5)).max_abs() <= 1e-10);
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn matrix_function_commutes(vals in prop::collection::vec(-3.0f64..3.0, 10)) {
        let m = sym_from(&vals, 4);
        let e = sym_eig(&m, 1e-8).unwrap();
        let f = matrix_fn(&e, f64::exp).unwrap();
        prop_assert!(f.matmul(&m).sub(&m.matmul(&f)).max_abs() <= 1e-8 * f.max_abs().max(1.0));
    }

    #[test]
    fn ode_zero_field_keeps_state(x in prop::collection::vec(-5.0f64..5.0, 3)) {
        let sol = integrate_ode(|v: &[f64]| Vector::zeros(v.len()), &x, StopRule::Horizon(2.0), &OdeOptions::default()).unwrap();
        prop_assert_eq!(sol.state.0, x);
    }
}
