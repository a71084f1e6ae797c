//! The rescaling function `psi` and its antiderivative `F`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Below this argument `psi` switches to its Taylor series.
const PSI_SERIES_CUTOFF: f64 = 1e-3;

/// `psi(x) = (e^{-x} - 1 + x) / x` for `x > 0`, `psi(0) = 0`.
///
/// Increasing from 0 towards 1. Small arguments use the 7-term series
/// `x/2 - x^2/6 + x^3/24 - ...` because the closed form cancels catastrophically.
pub fn psi<T: Real>(x: T) -> Result<T> {
    if x.is_nan() || x < T::zero() {
        return Err(Error::Domain(format!("psi requires x >= 0, got {x}")));
    }
    Ok(psi_unchecked(x))
}

#[inline]
pub(crate) fn psi_unchecked<T: Real>(x: T) -> T {
    if x == T::zero() {
        return T::zero();
    }
    if x.is_infinite() {
        return T::one();
    }
    if x < T::lit(PSI_SERIES_CUTOFF) {
        // sum_{n=2}^{8} (-1)^n x^{n-1} / n!, Horner form
        let c = [
            1.0 / 2.0,
            -1.0 / 6.0,
            1.0 / 24.0,
            -1.0 / 120.0,
            1.0 / 720.0,
            -1.0 / 5040.0,
            1.0 / 40320.0,
        ];
        let mut acc = T::zero();
        for &ck in c.iter().rev() {
            acc = acc * x + T::lit(ck);
        }
        return acc * x;
    }
    ((-x).exp() - T::one() + x) / x
}

/// `F(x) = integral_0^x psi(y) dy`, evaluated by adaptive Gauss-Kronrod (7/15) quadrature.
pub fn big_f<T: Real>(x: T) -> Result<T> {
    if x.is_nan() || x < T::zero() {
        return Err(Error::Domain(format!("F requires x >= 0, got {x}")));
    }
    if x.is_infinite() {
        return Ok(x);
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    let tol = T::tol(1e-10).max(T::epsilon() * T::lit(16.0) * x);
    Ok(adaptive_gk15(&|y| psi_unchecked(y), T::zero(), x, tol, 0))
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
// Gauss weights for the odd-indexed nodes above (1, 3, 5, 7).
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 40;

/// Integral of `f` over `[a, b]` by recursive bisection of G7/K15 panels.
pub fn adaptive_gk15<T: Real>(f: &dyn Fn(T) -> T, a: T, b: T, tol: T, depth: u32) -> T {
    let (k15, err) = gk15_panel(f, a, b);
    if err <= tol || depth >= MAX_DEPTH {
        return k15;
    }
    let mid = a + (b - a) * T::lit(0.5);
    let half = tol * T::lit(0.5);
    adaptive_gk15(f, a, mid, half, depth + 1) + adaptive_gk15(f, mid, b, half, depth + 1)
}

fn gk15_panel<T: Real>(f: &dyn Fn(T) -> T, a: T, b: T) -> (T, T) {
    let c = (a + b) * T::lit(0.5);
    let h = (b - a) * T::lit(0.5);
    let fc = f(c);
    let mut k = T::lit(K15_WEIGHTS[7]) * fc;
    let mut g = T::lit(G7_WEIGHTS[3]) * fc;
    for i in 0..7 {
        let dx = h * T::lit(GK_NODES[i]);
        let s = f(c - dx) + f(c + dx);
        k += T::lit(K15_WEIGHTS[i]) * s;
        if i % 2 == 1 {
            g += T::lit(G7_WEIGHTS[i / 2]) * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}
