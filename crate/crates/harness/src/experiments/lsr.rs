//! Linear scaling rule: slow-SDE coefficients before and after `eta -> kappa eta`, `K -> kappa K`, `H -> H / kappa`.

use slowsde_core::linalg::Vector;
use slowsde_core::manifold::{gf_project, make_frame, ManifoldFrame};
use slowsde_core::models::LossModel;
use slowsde_core::optim::{apply_lsr, RunConfig};
use slowsde_core::slowsde::{drift_and_diffusion, integrate_slow_sde, DriftDiffusion, SdeKind};
use slowsde_core::{Error, Result};

use super::run_seed;
use crate::config::{local_steps_for, HarnessConfig, MIN_SEEDS};
use crate::par::try_par_map;
use crate::report::{Assertion, Report};
use crate::stats::{mean, variance};

/// Relative tolerance of the algebraic identities.
pub const EXACT_TOL: f64 = 1e-12;
pub const SE_FACTOR: f64 = 3.0;
const POINTS: usize = 10;

/// Largest coefficient mismatch relative to the size of `want`.
fn mismatch(got: &DriftDiffusion<f64>, want: &DriftDiffusion<f64>) -> f64 {
    let db = got.b.sub(&want.b).max_abs() / (1.0 + want.b.max_abs());
    let da = got.a.sub(&want.a).max_abs() / (1.0 + want.a.max_abs());
    db.max(da)
}

/// Manifold points: the model's own chart when it has one, otherwise the projection of `theta0`.
fn manifold_points(model: &dyn LossModel<f64>, theta0: &[f64]) -> Result<Vec<Vector<f64>>> {
    if let Some(hint) = model.manifold_hint() {
        let m = hint.dim();
        // Symmetric grid on [-2.25, 2.25] that avoids coordinate zero.
        return Ok((0..POINTS).map(|i| hint.point(&vec![-2.25 + 0.5 * i as f64; m])).collect());
    }
    let p = gf_project(model, theta0)
        .into_point()
        .ok_or_else(|| Error::InvalidConfig("initial point does not project onto the manifold".into()))?;
    Ok(vec![p])
}

struct Worst(Vec<(String, f64)>);

impl Worst {
    fn record(&mut self, name: &str, v: f64) {
        match self.0.iter_mut().find(|(n, _)| n == name) {
            Some((_, w)) => *w = w.max(v),
            None => self.0.push((name.to_string(), v)),
        }
    }
}

fn check_point(model: &dyn LossModel<f64>, frame: &ManifoldFrame<f64>, run: &RunConfig<f64>, scaled: &RunConfig<f64>, kappa: f64, worst: &mut Worst) -> Result<()> {
    let dd = |kind: SdeKind<f64>| drift_and_diffusion(model, frame, &kind);
    let b = run.global_batch() as f64;
    let k = run.workers as f64;
    let alpha = run.alpha();
    let sgd = dd(SdeKind::Sgd { b })?;

    let scaled_sgd = dd(SdeKind::Sgd { b: scaled.global_batch() as f64 })?.time_rescaled(kappa);
    worst.record("SGD slow SDE invariant under LSR and time rescaling", mismatch(&scaled_sgd, &sgd));

    let lsr = dd(SdeKind::LocalLsr { b, k, kappa, eta_h: alpha })?;
    let scaled_local = dd(SdeKind::Local { b: scaled.global_batch() as f64, k: scaled.workers as f64, eta_h: scaled.alpha() })?
        .time_rescaled(kappa);
    worst.record("rescaled Local slow SDE equals the LSR slow SDE", mismatch(&scaled_local, &lsr));

    // Drift-II coefficient: (b_lsr - b_sgd) = -c grad^3 L[hat Psi].
    let v = model.third_contract(&frame.zeta, &frame.hat_psi);
    let vv = v.dot(&v);
    if vv > 0.0 {
        let c = -lsr.b.sub(&sgd.b).dot(&v) / vv;
        let want = (kappa * k - 1.0) / (2.0 * b);
        worst.record("LSR drift-II coefficient equals (kappa K - 1) / 2B", (c - want).abs() / want.abs().max(1.0 / b));
    }

    let kap = dd(SdeKind::Kappa { kappa1: 1.0 / b, kappa2: 1.0 / (2.0 * b) })?;
    worst.record("Kappa(1/B, 1/2B) equals SGD", mismatch(&kap, &sgd));
    let inf = dd(SdeKind::LocalInf { b, k })?;
    let kap = dd(SdeKind::Kappa { kappa1: 1.0 / b, kappa2: k / (2.0 * b) })?;
    worst.record("Kappa(1/B, K/2B) equals LocalInf", mismatch(&kap, &inf));
    let one = dd(SdeKind::Local { b, k: 1.0, eta_h: alpha })?;
    worst.record("Local with K = 1 equals SGD", mismatch(&one, &sgd));
    let k_sgd = DriftDiffusion { b: sgd.b.scale(k), a: sgd.a.clone() };
    worst.record("LocalInf drift is K times the SGD drift", mismatch(&inf, &k_sgd));
    let lsr1 = dd(SdeKind::LocalLsr { b, k, kappa: 1.0, eta_h: alpha })?;
    let local = dd(SdeKind::Local { b, k, eta_h: alpha })?;
    worst.record("kappa = 1 leaves the Local slow SDE unchanged", mismatch(&lsr1, &local));
    Ok(())
}

pub fn lsr_experiment(cfg: &HarnessConfig) -> Result<Report> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let theta0 = cfg.theta0();
    let mut rep = Report::new("lsr", model.name());
    let eta = cfg.etas[0];
    let run = RunConfig::new(eta, cfg.workers, cfg.local_batch, local_steps_for(cfg.alpha, eta), 1);
    let scaled = apply_lsr(&run, cfg.kappa)?;
    let same = apply_lsr(&run, 1.0)?;
    rep.check(Assertion::holds("apply_lsr with kappa = 1 is the identity", same == run));
    rep.stat("lsr", "kappa K", scaled.workers as f64);
    rep.stat("lsr", "H / kappa", scaled.local_steps as f64);

    let points = manifold_points(&*model, &theta0)?;
    let mut worst = Worst(Vec::new());
    for p in &points {
        let frame = make_frame(&*model, p, run.alpha())?;
        check_point(&*model, &frame, &run, &scaled, cfg.kappa, &mut worst)?;
    }
    for (name, w) in worst.0 {
        rep.check(Assertion::at_most(name, w, EXACT_TOL));
    }

    if cfg.seeds > 0 {
        let zeta0 = gf_project(&*model, &theta0)
            .into_point()
            .ok_or_else(|| Error::InvalidConfig("initial point does not project onto the manifold".into()))?;
        let b = run.global_batch() as f64;
        let kb = scaled.global_batch() as f64;
        // Same number of steps on both clocks.
        let ends = |cell: usize, kind: SdeKind<f64>, horizon: f64, dt: f64| -> Result<Vec<Vector<f64>>> {
            let out = try_par_map(cfg.seeds, |i| match integrate_slow_sde(&*model, &kind, &zeta0, horizon, dt, run_seed(cfg, cell, i, 0), usize::MAX) {
                Ok(r) => Ok(r.points.last().map(|p| p.theta.clone())),
                Err(Error::LeftBasin { .. }) => Ok(None),
                Err(e) => Err(e),
            })?;
            Ok(out.into_iter().flatten().collect())
        };
        let base = ends(0, SdeKind::Sgd { b }, cfg.horizon, cfg.sde_dt)?;
        let resc = ends(1, SdeKind::Sgd { b: kb }, cfg.kappa * cfg.horizon, cfg.kappa * cfg.sde_dt)?;
        if base.len().min(resc.len()) < MIN_SEEDS {
            rep.check(Assertion::holds(format!("at least {MIN_SEEDS} slow SDE paths stayed in the basin"), false));
            return Ok(rep);
        }
        for g in &cfg.test_fns {
            let a: Vec<f64> = base.iter().map(|z| g.eval(z)).collect();
            let c: Vec<f64> = resc.iter().map(|z| g.eval(z)).collect();
            let se = (variance(&a) / a.len() as f64 + variance(&c) / c.len() as f64).sqrt();
            let diff = mean(&a) - mean(&c);
            rep.stat("sgd", format!("mean {g} at T"), mean(&a));
            rep.stat("sgd lsr", format!("mean {g} at kappa T"), mean(&c));
            rep.samples("sgd", &format!("{g} at T"), &a);
            rep.samples("sgd lsr", &format!("{g} at kappa T"), &c);
            rep.check(Assertion::close(format!("mean of {g} agrees after rescaling"), diff, 0.0, SE_FACTOR * se));
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;

    #[test]
    fn deterministic_part_passes_without_seeds() {
        let mut c = HarnessConfig::defaults(Experiment::Lsr);
        c.seeds = 0;
        let rep = lsr_experiment(&c).unwrap();
        assert!(rep.passed(), "{}", rep.summary());
        assert!(rep.assertions.len() >= 8);
    }

    #[test]
    fn non_integral_kappa_is_rejected() {
        let mut c = HarnessConfig::defaults(Experiment::Lsr);
        c.seeds = 0;
        c.kappa = 3.0;
        assert!(matches!(lsr_experiment(&c), Err(Error::LsrNotIntegral { .. })));
    }
}
