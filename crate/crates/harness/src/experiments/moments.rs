//! First and second moments of the projected displacement over one group of rounds.
//!
//! With `R = floor(1 / (alpha eta^beta))` rounds, the displacement
//! `Phi(theta_bar_R) - Phi(theta_0)` has mean close to
//! `(eta^(1-beta) / 2B) d^2 Phi[Sigma + (K-1) Psi]` and tangent second moment
//! close to `(eta^(1-beta) / B) Sigma_par`.

use slowsde_core::linalg::Vector;
use slowsde_core::manifold::{gf_project, make_frame, second_diff_phi, Projection};
use slowsde_core::optim::{local_sgd_observe, RunConfig};
use slowsde_core::{Error, Result};

use super::{eta_label, run_seed};
use crate::config::{local_steps_for, HarnessConfig, ModelSpec, MIN_SEEDS};
use crate::par::try_par_map;
use crate::report::{Assertion, Report};
use crate::stats::{mean, std_err};

/// Allowed distance from the target in standard errors.
pub const SE_FACTOR: f64 = 3.0;

/// `floor(1 / (alpha eta^beta))`, at least one.
pub fn group_rounds(alpha: f64, eta: f64, beta: f64) -> usize {
    ((1.0 / (alpha * eta.powf(beta))).floor() as usize).max(1)
}

pub fn moment_experiment(cfg: &HarnessConfig) -> Result<Report> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let theta0 = cfg.theta0();
    let mut rep = Report::new("moments", model.name());
    let phi0 = gf_project(&*model, &theta0)
        .into_point()
        .ok_or_else(|| Error::InvalidConfig("initial point does not project onto the manifold".into()))?;
    let frame = make_frame(&*model, &phi0, cfg.alpha)?;
    let eig = &frame.eig;
    let tangent: Vec<Vec<f64>> = (0..eig.dim()).filter(|&i| eig.is_null(i)).map(|i| eig.vector(i)).collect();
    let normal: Vec<Vec<f64>> = (0..eig.dim()).filter(|&i| !eig.is_null(i)).map(|i| eig.vector(i)).collect();
    let b = (cfg.workers * cfg.local_batch) as f64;
    // Constant Hessian and noise make the second-moment formula an exact target.
    let check_second = matches!(cfg.model, ModelSpec::Block { .. });

    for (c, &eta) in cfg.etas.iter().enumerate() {
        let label = format!("{} {}", model.name(), eta_label(eta));
        let h = local_steps_for(cfg.alpha, eta);
        let rounds = group_rounds(cfg.alpha, eta, cfg.beta);
        let scale = eta.powf(1.0 - cfg.beta);
        let sig = frame.sigma.add(&frame.psi.scale((cfg.workers - 1) as f64));
        let target_mean = second_diff_phi(&*model, &frame, &sig)?.scale(scale / (2.0 * b));
        let target_second = frame.sigma_par.scale(scale / b);
        rep.stat(&label, "H", h as f64);
        rep.stat(&label, "R_grp", rounds as f64);

        let run = RunConfig::new(eta, cfg.workers, cfg.local_batch, h, rounds);
        let disp = try_par_map(cfg.seeds, |i| {
            let mut last: Option<Vector<f64>> = None;
            let ok = local_sgd_observe(&*model, &run.clone().with_seed(run_seed(cfg, c, i, 0)), &theta0, |_, _, th| {
                last = Some(th.clone());
                true
            })?;
            let end = match last {
                Some(th) if ok => th,
                None if ok => Vector(theta0.clone()),
                _ => return Ok(None),
            };
            Ok(match gf_project(&*model, &end) {
                Projection::Point(p) => Some(p.sub(&phi0)),
                Projection::Null => None,
            })
        })?;
        let kept: Vec<Vector<f64>> = disp.into_iter().flatten().collect();
        if kept.len() < cfg.seeds {
            rep.note(format!("{label}: {} of {} seeds diverged or lost their projection and were excluded", cfg.seeds - kept.len(), cfg.seeds));
        }
        if kept.len() < MIN_SEEDS {
            rep.check(Assertion::holds(format!("{label}: at least {MIN_SEEDS} usable seeds"), false));
            continue;
        }
        let comp = |u: &[f64]| -> Vec<f64> { kept.iter().map(|v| v.dot(u)).collect() };

        for (k, u) in tangent.iter().enumerate() {
            let xs = comp(u);
            let (m, se) = (mean(&xs), std_err(&xs));
            let want = target_mean.dot(u);
            rep.stat(&label, format!("tangent[{k}] mean"), m);
            rep.stat(&label, format!("tangent[{k}] se"), se);
            rep.check(Assertion::close(format!("{label}: tangent[{k}] mean displacement"), m, want, SE_FACTOR * se));
            if check_second {
                for (l, v) in tangent.iter().enumerate().skip(k) {
                    let xv = comp(v);
                    let prod: Vec<f64> = xs.iter().zip(&xv).map(|(a, b)| a * b).collect();
                    let (m2, se2) = (mean(&prod), std_err(&prod));
                    let want2 = target_second.mul_vec(v).dot(u);
                    rep.check(Assertion::close(format!("{label}: tangent[{k},{l}] second moment"), m2, want2, SE_FACTOR * se2));
                }
            }
        }
        for (k, u) in normal.iter().enumerate() {
            let xs = comp(u);
            let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
            rep.stat(&label, format!("normal[{k}] mean"), mean(&xs));
            rep.stat(&label, format!("normal[{k}] second moment"), mean(&sq));
            rep.stat(&label, format!("normal[{k}] second moment / eta^(1-beta)"), mean(&sq) / scale);
        }
        for i in 0..phi0.len() {
            let xs: Vec<f64> = kept.iter().map(|v| v[i]).collect();
            rep.samples(&label, &format!("delta_phi[{i}]"), &xs);
        }
    }
    Ok(rep)
}
