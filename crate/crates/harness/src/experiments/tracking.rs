//! Local SGD tracks parallel SGD at scale `sqrt(eta)` over a fixed horizon.

use slowsde_core::linalg::Vector;
use slowsde_core::models::LossModel;
use slowsde_core::optim::{local_sgd_observe, parallel_sgd_observe, RunConfig};
use slowsde_core::Result;

use super::{bootstrap_seed, eta_label, run_seed};
use crate::config::{local_steps_for, HarnessConfig, MIN_SEEDS};
use crate::par::try_par_map;
use crate::report::{Assertion, Report};
use crate::stats::{bootstrap_slope_ci, log_log_slope, mean, pick, quantile, resample_indices, BOOTSTRAP_RESAMPLES};

pub const SLOPE_RANGE: (f64, f64) = (0.35, 0.65);

/// `max_s |theta_bar_s - w_{sH}|` for one seed pair, or `None` when either run diverged.
pub(crate) fn tracking_error(
    model: &dyn LossModel<f64>,
    run: &RunConfig<f64>,
    local_seed: u64,
    sgd_seed: u64,
    theta0: &[f64],
) -> Result<Option<f64>> {
    let h = run.local_steps;
    let mut local = Vec::with_capacity(run.rounds + 1);
    let ok = local_sgd_observe(model, &run.clone().with_seed(local_seed), theta0, |_, _, th| {
        local.push(th.clone());
        true
    })?;
    if !ok {
        return Ok(None);
    }
    let mut err: f64 = 0.0;
    let mut s = 0;
    let ok = parallel_sgd_observe(model, &run.clone().with_seed(sgd_seed), theta0, |_, t, w: &Vector<f64>| {
        if t % h == 0 {
            err = err.max(local[s].sub(w).norm());
            s += 1;
        }
        true
    })?;
    Ok(ok.then_some(err))
}

pub fn tracking_experiment(cfg: &HarnessConfig) -> Result<Report> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let theta0 = cfg.theta0();
    let mut rep = Report::new("tracking", model.name());
    let mut xs = Vec::new();
    let mut cells: Vec<Vec<f64>> = Vec::new();
    for (c, &eta) in cfg.etas.iter().enumerate() {
        let h = local_steps_for(cfg.alpha, eta);
        let rounds = ((cfg.horizon / (eta * h as f64)).round() as usize).max(1);
        let run = RunConfig::new(eta, cfg.workers, cfg.local_batch, h, rounds);
        let label = eta_label(eta);
        let errs = try_par_map(cfg.seeds, |i| {
            tracking_error(&*model, &run, run_seed(cfg, c, i, 0), run_seed(cfg, c, i, 1), &theta0)
        })?;
        let kept: Vec<f64> = errs.iter().flatten().copied().collect();
        rep.stat(&label, "H", h as f64);
        rep.stat(&label, "rounds", rounds as f64);
        if kept.len() < errs.len() {
            rep.note(format!("{label}: {} of {} seed pairs diverged and were excluded", errs.len() - kept.len(), errs.len()));
        }
        if kept.len() < MIN_SEEDS {
            rep.note(format!("{label}: excluded, only {} usable seeds", kept.len()));
            continue;
        }
        rep.stat(&label, "q_delta", quantile(&kept, cfg.delta));
        rep.stat(&label, "mean", mean(&kept));
        rep.samples(&label, "max_error", &kept);
        xs.push(eta);
        cells.push(kept);
    }
    if xs.len() < 2 {
        rep.check(Assertion::holds("at least two usable learning rates", false));
        return Ok(rep);
    }
    let qs: Vec<f64> = cells.iter().map(|v| quantile(v, cfg.delta)).collect();
    let slope = log_log_slope(&xs, &qs);
    let ci = bootstrap_slope_ci(&xs, bootstrap_seed(cfg, 0), BOOTSTRAP_RESAMPLES, |c, rng| {
        let v = &cells[c];
        quantile(&pick(v, &resample_indices(v.len(), rng)), cfg.delta)
    });
    rep.fit("log Q_delta(error) vs log eta", slope, ci);
    rep.check(Assertion::within("tracking-error slope in eta", slope, SLOPE_RANGE.0, SLOPE_RANGE.1).with_expected(0.5));
    Ok(rep)
}
