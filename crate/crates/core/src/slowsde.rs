//! Euler-Maruyama integration of slow SDEs on the minimizer manifold.
//!
//! A step moves `zeta` by the projected increment
//! `P_par A dW + (P_par b + d^2 Phi[A A^T] / 2) dt` and then retracts onto the
//! manifold with the gradient-flow projection.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::manifold::{gf_project, hat_psi, make_frame, second_diff_phi, ManifoldFrame, Projection};
use crate::models::LossModel;
use crate::numerics::{matrix_fn, psd_sqrt, psi_unchecked};
use crate::optim::TrajectoryPoint;
use crate::rng::{domain, standard_normal, stream};
use crate::scalar::Real;

/// The slow-SDE family. `b` is the global batch size, `k` the number of workers,
/// `eta_h` the product `eta * H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SdeKind<T> {
    Sgd { b: T },
    Local { b: T, k: T, eta_h: T },
    Kappa { kappa1: T, kappa2: T },
    LocalLsr { b: T, k: T, kappa: T, eta_h: T },
    LocalInf { b: T, k: T },
    LabelNoiseSgd { b: T },
    LabelNoiseLocal { b: T, k: T, eta_h: T },
    LabelNoiseLocalInf { b: T, k: T },
}

impl<T: Real> SdeKind<T> {
    /// `eta * H` used for the `psi` rescalings (zero for kinds without one).
    pub fn eta_h(&self) -> T {
        match *self {
            SdeKind::Local { eta_h, .. } | SdeKind::LocalLsr { eta_h, .. } | SdeKind::LabelNoiseLocal { eta_h, .. } => eta_h,
            _ => T::zero(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SdeKind::Sgd { .. } => "sgd",
            SdeKind::Local { .. } => "local",
            SdeKind::Kappa { .. } => "kappa",
            SdeKind::LocalLsr { .. } => "local_lsr",
            SdeKind::LocalInf { .. } => "local_inf",
            SdeKind::LabelNoiseSgd { .. } => "label_noise_sgd",
            SdeKind::LabelNoiseLocal { .. } => "label_noise_local",
            SdeKind::LabelNoiseLocalInf { .. } => "label_noise_local_inf",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("slow SDE parameter {name} must be positive, got {v}")))
            }
        };
        match *self {
            SdeKind::Sgd { b } | SdeKind::LabelNoiseSgd { b } => positive("B", b),
            SdeKind::Local { b, k, eta_h } | SdeKind::LabelNoiseLocal { b, k, eta_h } => {
                positive("B", b)?;
                positive("K", k)?;
                positive("etaH", eta_h)
            }
            SdeKind::Kappa { kappa1, kappa2 } => {
                positive("kappa1", kappa1)?;
                positive("kappa2", kappa2)
            }
            SdeKind::LocalLsr { b, k, kappa, eta_h } => {
                positive("B", b)?;
                positive("K", k)?;
                positive("kappa", kappa)?;
                positive("etaH", eta_h)
            }
            SdeKind::LocalInf { b, k } | SdeKind::LabelNoiseLocalInf { b, k } => {
                positive("B", b)?;
                positive("K", k)
            }
        }
    }
}

/// Drift `b` (before projection) and diffusion factor `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftDiffusion<T> {
    pub b: Vector<T>,
    pub a: Matrix<T>,
}

impl<T: Real> DriftDiffusion<T> {
    /// Coefficients of the same process run on a clock `kappa` times faster.
    pub fn time_rescaled(&self, kappa: T) -> Self {
        DriftDiffusion { b: self.b.scale(kappa), a: self.a.scale(kappa.sqrt()) }
    }
}

/// `b` and `A` of `kind` at the frame point.
pub fn drift_and_diffusion<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    frame: &ManifoldFrame<T>,
    kind: &SdeKind<T>,
) -> Result<DriftDiffusion<T>> {
    kind.validate()?;
    let z = &frame.zeta;
    let d = z.len();
    let half = T::lit(0.5);
    let one = T::one();
    let root_par = || psd_sqrt(&frame.sigma_par);
    let drift_i = || model.third_contract(z, &frame.hat_sigma_diamond);
    let drift_ii = |eta_h: T| {
        let hp = if eta_h == frame.eta_h { frame.hat_psi.clone() } else { hat_psi(frame, eta_h) };
        model.third_contract(z, &hp)
    };
    // Gradient of tr F(2 eta_h H) / (2 eta_h) is grad^3 L[psi(2 eta_h H)].
    let label_grad = |eta_h: T| -> Result<Vector<T>> {
        let m = matrix_fn(&frame.eig, |l| psi_unchecked(T::lit(2.0) * eta_h * l.max(T::zero())))?;
        Ok(model.third_contract(z, &m))
    };
    let tr_grad = || model.third_contract(z, &Matrix::identity(d));

    let out = match *kind {
        SdeKind::Sgd { b } => DriftDiffusion { b: drift_i().scale(-half / b), a: root_par()?.scale(one / b.sqrt()) },
        SdeKind::Local { b, k, eta_h } => {
            let mut drift = drift_i().scale(-half / b);
            drift.axpy(-(k - one) * half / b, &drift_ii(eta_h));
            DriftDiffusion { b: drift, a: root_par()?.scale(one / b.sqrt()) }
        }
        SdeKind::Kappa { kappa1, kappa2 } => {
            DriftDiffusion { b: drift_i().scale(-kappa2), a: root_par()?.scale(kappa1.sqrt()) }
        }
        SdeKind::LocalLsr { b, k, kappa, eta_h } => {
            let mut drift = drift_i().scale(-half / b);
            drift.axpy(-(kappa * k - one) * half / b, &drift_ii(eta_h));
            DriftDiffusion { b: drift, a: root_par()?.scale(one / b.sqrt()) }
        }
        SdeKind::LocalInf { b, k } => {
            DriftDiffusion { b: drift_i().scale(-k * half / b), a: root_par()?.scale(one / b.sqrt()) }
        }
        SdeKind::LabelNoiseSgd { b } => {
            DriftDiffusion { b: tr_grad().scale(-one / (T::lit(4.0) * b)), a: Matrix::zeros(d, d) }
        }
        SdeKind::LabelNoiseLocal { b, k, eta_h } => {
            let mut g = tr_grad();
            g.axpy(k - one, &label_grad(eta_h)?);
            DriftDiffusion { b: g.scale(-one / (T::lit(4.0) * b)), a: Matrix::zeros(d, d) }
        }
        SdeKind::LabelNoiseLocalInf { b, k } => {
            DriftDiffusion { b: tr_grad().scale(-k / (T::lit(4.0) * b)), a: Matrix::zeros(d, d) }
        }
    };
    if !out.b.is_finite() || !out.a.is_finite() {
        return Err(Error::NonFinite("slow SDE coefficients".into()));
    }
    Ok(out)
}

/// Current state of an integration.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeState<T> {
    pub zeta: Vector<T>,
    pub t: T,
    pub step: u64,
}

/// Deterministic part of one step, `P_par b + d^2 Phi[A A^T] / 2`, and the projected noise factor `P_par A`.
pub fn projected_coefficients<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    frame: &ManifoldFrame<T>,
    kind: &SdeKind<T>,
) -> Result<(Vector<T>, Matrix<T>)> {
    let dd = drift_and_diffusion(model, frame, kind)?;
    let mut drift = frame.p_par.mul_vec(&dd.b);
    let aat = dd.a.matmul(&dd.a.transpose()).symmetrize();
    if aat.max_abs() > T::zero() {
        drift.axpy(T::lit(0.5), &second_diff_phi(model, frame, &aat)?);
    }
    Ok((drift, frame.p_par.matmul(&dd.a)))
}

/// One Euler-Maruyama step followed by retraction.
pub fn step_projected<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    state: &SdeState<T>,
    kind: &SdeKind<T>,
    dt: T,
    seed: u64,
) -> Result<SdeState<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    let frame = make_frame(model, &state.zeta, kind.eta_h())?;
    let (drift, pa) = projected_coefficients(model, &frame, kind)?;
    let mut next = state.zeta.clone();
    next.axpy(dt, &drift);
    if pa.max_abs() > T::zero() {
        let mut rng = stream(seed, &[domain::SDE, state.step]);
        let sq = dt.sqrt();
        let dw: Vec<T> = (0..pa.cols()).map(|_| standard_normal::<T, _>(&mut rng) * sq).collect();
        next.axpy(T::one(), &pa.mul_vec(&dw));
    }
    let t = state.t + dt;
    match gf_project(model, &next) {
        Projection::Point(z) => Ok(SdeState { zeta: z, t, step: state.step + 1 }),
        Projection::Null => Err(Error::LeftBasin { time: t.to_f64_lossy(), state: next.to_f64() }),
    }
}

/// Default step size `min(1e-3, T / 1000)`.
pub fn default_dt<T: Real>(horizon: T) -> T {
    T::lit(1e-3).min(horizon / T::lit(1e3))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeRecord<T> {
    pub kind: SdeKind<T>,
    pub dt: T,
    pub points: Vec<TrajectoryPoint<T>>,
}

fn sde_point<T: Real, M: LossModel<T> + ?Sized>(model: &M, s: usize, st: &SdeState<T>) -> TrajectoryPoint<T> {
    TrajectoryPoint {
        s,
        t: st.t,
        theta: st.zeta.clone(),
        phi: Some(st.zeta.clone()),
        dist: Some(T::zero()),
        loss: model.loss(&st.zeta),
        tr_hess: Some(model.hessian(&st.zeta).trace()),
    }
}

/// Integrates `kind` from `zeta0` to time `horizon`, recording every `record_every` steps.
///
/// `observe(step, state)` runs after every step and may stop the integration by returning `false`.
pub fn integrate_slow_sde_observe<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    kind: &SdeKind<T>,
    zeta0: &[T],
    horizon: T,
    dt: T,
    seed: u64,
    mut observe: impl FnMut(u64, &SdeState<T>) -> bool,
) -> Result<SdeState<T>> {
    kind.validate()?;
    if !(dt > T::zero()) || !(horizon >= T::zero()) {
        return Err(Error::InvalidConfig(format!("need dt > 0 and T >= 0 (dt = {dt}, T = {horizon})")));
    }
    let n_steps = (horizon / dt).round().to_usize().unwrap_or(0);
    let mut state = SdeState { zeta: Vector(zeta0.to_vec()), t: T::zero(), step: 0 };
    make_frame(model, zeta0, kind.eta_h())?;
    if !observe(0, &state) {
        return Ok(state);
    }
    for _ in 0..n_steps {
        state = step_projected(model, &state, kind, dt, seed)?;
        if !observe(state.step, &state) {
            break;
        }
    }
    Ok(state)
}

pub fn integrate_slow_sde<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    kind: &SdeKind<T>,
    zeta0: &[T],
    horizon: T,
    dt: T,
    seed: u64,
    record_every: usize,
) -> Result<SdeRecord<T>> {
    let stride = record_every.max(1) as u64;
    let n_steps = (horizon / dt).round().to_u64().unwrap_or(0);
    let mut points = Vec::new();
    integrate_slow_sde_observe(model, kind, zeta0, horizon, dt, seed, |step, st| {
        if step % stride == 0 || step == n_steps {
            points.push(sde_point(model, step as usize, st));
        }
        true
    })?;
    Ok(SdeRecord { kind: *kind, dt, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{NoiseKind, QuadraticValley};
    use crate::numerics::psi;
    use approx::assert_abs_diff_eq;

    fn aligned() -> QuadraticValley<f64> {
        QuadraticValley::hessian_aligned(1.0).unwrap()
    }

    #[test]
    fn local_drift_on_valley() {
        let m = aligned();
        let f = make_frame(&m, &[0.0, 1.0], 0.7).unwrap();
        let (b, k, eh) = (8.0, 4.0, 0.7);
        let dd = drift_and_diffusion(&m, &f, &SdeKind::Local { b, k, eta_h: eh }).unwrap();
        assert_abs_diff_eq!(dd.b[0], 0.0, epsilon = 1e-14);
        let want = -(1.0 + (k - 1.0) * psi(4.0 * eh).unwrap()) / (2.0 * b);
        assert_abs_diff_eq!(dd.b[1], want, epsilon = 1e-14);
        assert_eq!(dd.a.max_abs(), 0.0);
    }

    #[test]
    fn kind_algebra() {
        let m = QuadraticValley::new(NoiseKind::Custom { cov: Matrix::from_f64(2, 2, &[1., 0.3, 0.3, 2.]) }).unwrap();
        let f = make_frame(&m, &[0.0, 0.8], 1.3).unwrap();
        let (b, k) = (6.0, 4.0);
        let sgd = drift_and_diffusion(&m, &f, &SdeKind::Sgd { b }).unwrap();
        let k1 = drift_and_diffusion(&m, &f, &SdeKind::Local { b, k: 1.0, eta_h: 1.3 }).unwrap();
        assert!(sgd.b.sub(&k1.b).max_abs() < 1e-12 && sgd.a.sub(&k1.a).max_abs() < 1e-12);
        let inf = drift_and_diffusion(&m, &f, &SdeKind::LocalInf { b, k }).unwrap();
        assert!(inf.b.sub(&sgd.b.scale(k)).max_abs() < 1e-12);
        assert!(inf.a.sub(&sgd.a).max_abs() < 1e-12);
        let kap = drift_and_diffusion(&m, &f, &SdeKind::Kappa { kappa1: 1.0 / b, kappa2: 0.5 / b }).unwrap();
        assert!(kap.b.sub(&sgd.b).max_abs() < 1e-12 && kap.a.sub(&sgd.a).max_abs() < 1e-12);
    }

    #[test]
    fn static_state_is_fixed() {
        let m = QuadraticValley::<f64>::noiseless();
        let s = SdeState { zeta: Vector(vec![0.0, 1.5]), t: 0.0, step: 0 };
        let n = step_projected(&m, &s, &SdeKind::Sgd { b: 1.0 }, 1e-3, 0).unwrap();
        assert_eq!(n.zeta, s.zeta);
        assert_eq!(n.step, 1);
    }

    #[test]
    fn label_noise_step() {
        let m = aligned();
        let s = SdeState { zeta: Vector(vec![0.0, 2.0]), t: 0.0, step: 0 };
        let dt = 1e-3;
        let n = step_projected(&m, &s, &SdeKind::LabelNoiseSgd { b: 2.0 }, dt, 0).unwrap();
        assert!((n.zeta[1] - (2.0 - dt * 2.0 / 4.0)).abs() < 1e-9);
    }

    #[test]
    fn label_noise_flow_decays_exponentially() {
        let m = aligned();
        let (b, horizon) = (1.0, 1.0);
        let r = integrate_slow_sde(&m, &SdeKind::LabelNoiseSgd { b }, &[0.0, 1.0], horizon, 1e-3, 0, 100).unwrap();
        let y = r.points.last().unwrap().theta[1];
        let exact = (-horizon / (2.0 * b)).exp();
        assert!((y - exact).abs() / exact < 2e-3);
        for w in r.points.windows(2) {
            assert!(w[1].tr_hess.unwrap() < w[0].tr_hess.unwrap());
        }
    }

    #[test]
    fn rejects_bad_kinds() {
        assert!(SdeKind::Sgd { b: 0.0 }.validate().is_err());
        assert!(SdeKind::Local { b: 1.0, k: 2.0, eta_h: -1.0 }.validate().is_err());
    }
}
