//! Adaptive explicit Runge-Kutta integration (Dormand-Prince 5(4) pair).

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::scalar::Real;

/// When to stop integrating an autonomous field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule<T> {
    /// Integrate up to this time.
    Horizon(T),
    /// Integrate until `|field(x)| < eps`.
    FieldNorm(T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions<T> {
    /// Local error tolerance (used as both absolute and relative tolerance).
    pub tol: T,
    pub initial_step: T,
    pub safety: T,
    pub max_steps: usize,
    pub max_step: Option<T>,
    /// States with norm above this are reported as divergent.
    pub blowup_norm: T,
}

impl<T: Real> OdeOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        OdeOptions {
            tol,
            initial_step: T::lit(1e-3),
            safety: T::lit(0.9),
            max_steps: 10_000_000,
            max_step: None,
            blowup_norm: T::lit(1e12),
        }
    }
}

impl<T: Real> Default for OdeOptions<T> {
    fn default() -> Self {
        Self::with_tol(T::tol(1e-10))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution<T> {
    pub state: Vector<T>,
    pub time: T,
    pub accepted: usize,
    pub rejected: usize,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
// Fraction of the real stability interval (about 3.3) used when capping steps.
const STIFF_CAP: f64 = 2.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Fifth-order minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combo<T: Real>(x: &[T], h: T, terms: &[(f64, &[T])]) -> Vector<T> {
    let mut out = Vector(x.to_vec());
    for &(c, k) in terms {
        if c != 0.0 {
            out.axpy(h * T::lit(c), k);
        }
    }
    out
}

/// Integrates the autonomous field `dx/dt = field(x)` from `x0`.
///
/// Steps are accepted when the embedded error estimate, measured against
/// `tol * (1 + |x|)` componentwise, is at most one.
pub fn integrate_ode<T, F>(mut field: F, x0: &[T], stop: StopRule<T>, opts: &OdeOptions<T>) -> Result<OdeSolution<T>>
where
    T: Real,
    F: FnMut(&[T]) -> Vector<T>,
{
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    let mut x = Vector(x0.to_vec());
    let mut t = T::zero();
    let mut k1 = field(&x);
    if !k1.is_finite() {
        return Err(Error::NonFinite("vector field at initial state".into()));
    }
    match stop {
        StopRule::Horizon(end) if end <= T::zero() => {
            return Ok(OdeSolution { state: x, time: t, accepted: 0, rejected: 0 });
        }
        StopRule::FieldNorm(eps) if k1.norm() < eps => {
            return Ok(OdeSolution { state: x, time: t, accepted: 0, rejected: 0 });
        }
        _ => {}
    }
    if k1.iter().all(|&v| v == T::zero()) {
        // Stationary point: the flow never moves.
        let time = match stop {
            StopRule::Horizon(end) => end,
            StopRule::FieldNorm(_) => t,
        };
        return Ok(OdeSolution { state: x, time, accepted: 0, rejected: 0 });
    }

    let mut h = opts.initial_step;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let fifth = T::lit(0.2);
    loop {
        if accepted + rejected >= opts.max_steps {
            return Err(Error::NonConvergentFlow { steps: accepted + rejected, time: t.to_f64_lossy() });
        }
        if let Some(hmax) = opts.max_step {
            h = h.min(hmax);
        }
        let mut last = false;
        if let StopRule::Horizon(end) = stop {
            if t + h >= end {
                h = end - t;
                last = true;
            }
        }

        let k2 = field(&combo(&x, h, &[(A21, &k1)]));
        let k3 = field(&combo(&x, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = field(&combo(&x, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = field(&combo(&x, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = field(&combo(&x, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let x_new = combo(&x, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = field(&x_new);

        let mut err = T::zero();
        for i in 0..x.len() {
            let e = h
                * (T::lit(E1) * k1[i]
                    + T::lit(E3) * k3[i]
                    + T::lit(E4) * k4[i]
                    + T::lit(E5) * k5[i]
                    + T::lit(E6) * k6[i]
                    + T::lit(E7) * k7[i]);
            let sc = opts.tol * (T::one() + x[i].abs().max(x_new[i].abs()));
            err = err.max(e.abs() / sc);
        }

        if !err.is_finite() || !x_new.is_finite() || !k7.is_finite() {
            if h <= T::epsilon() {
                return Err(Error::NonFinite("ODE state".into()));
            }
            h *= T::lit(0.25);
            rejected += 1;
            continue;
        }

        if err <= T::one() {
            accepted += 1;
            t = if last {
                match stop {
                    StopRule::Horizon(end) => end,
                    StopRule::FieldNorm(_) => t + h,
                }
            } else {
                t + h
            };
            // Local Lipschitz estimate along the step; keeps stiff modes damped
            // instead of hovering at the stability edge.
            let dx = x_new.sub(&x).norm();
            let lip = if dx > T::zero() { k7.sub(&k1).norm() / dx } else { T::zero() };
            x = x_new;
            k1 = k7;
            if x.norm() > opts.blowup_norm {
                return Err(Error::NonFinite(format!("ODE state diverged (|x| > {})", opts.blowup_norm)));
            }
            match stop {
                StopRule::Horizon(_) if last => break,
                StopRule::FieldNorm(eps) if k1.norm() < eps => break,
                _ => {}
            }
            let factor = if err == T::zero() {
                T::lit(5.0)
            } else {
                (opts.safety * err.powf(-fifth)).min(T::lit(5.0)).max(T::lit(0.2))
            };
            h *= factor;
            if lip > T::zero() {
                h = h.min(T::lit(STIFF_CAP) / lip);
            }
        } else {
            rejected += 1;
            let factor = (opts.safety * err.powf(-fifth)).max(T::lit(0.1));
            h *= factor;
        }
        if h <= T::epsilon() * (T::one() + t.abs()) {
            return Err(Error::NonConvergentFlow { steps: accepted + rejected, time: t.to_f64_lossy() });
        }
    }
    Ok(OdeSolution { state: x, time: t, accepted, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_decay_to_horizon() {
        let sol = integrate_ode(
            |x: &[f64]| Vector(vec![-x[0]]),
            &[1.0],
            StopRule::Horizon(1.0),
            &OdeOptions::with_tol(1e-10),
        )
        .unwrap();
        assert_abs_diff_eq!(sol.state[0], (-1.0f64).exp(), epsilon = 1e-8);
        assert_eq!(sol.time, 1.0);
    }

    #[test]
    fn zero_field_is_exactly_stationary() {
        let x0 = [0.3, -1.7, 1e-9];
        for stop in [StopRule::Horizon(3.0), StopRule::FieldNorm(1e-10)] {
            let sol = integrate_ode(|x: &[f64]| Vector::zeros(x.len()), &x0, stop, &OdeOptions::default()).unwrap();
            assert_eq!(sol.state.0, x0.to_vec());
        }
    }

    #[test]
    fn step_budget_exhaustion_is_reported() {
        let mut opts = OdeOptions::with_tol(1e-12);
        opts.max_steps = 3;
        let err = integrate_ode(|x: &[f64]| Vector(vec![-x[0]]), &[1.0], StopRule::FieldNorm(1e-14), &opts);
        assert!(matches!(err, Err(Error::NonConvergentFlow { .. })));
    }

    #[test]
    fn rejects_non_finite_start() {
        let err = integrate_ode(|x: &[f64]| Vector(x.to_vec()), &[f64::NAN], StopRule::Horizon(1.0), &OdeOptions::default());
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn blowup_is_rejected() {
        let err = integrate_ode(|x: &[f64]| Vector(vec![x[0] * x[0]]), &[1.0], StopRule::Horizon(2.0), &OdeOptions::default());
        assert!(err.is_err());
    }
}
