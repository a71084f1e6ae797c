//! Decay rate of `E[g]` under Local SGD relative to parallel SGD across `eta H`.

use slowsde_core::numerics::psi;
use slowsde_core::optim::{local_sgd_observe, parallel_sgd_observe, RunConfig};
use slowsde_core::{Error, Result};

use super::{bootstrap_seed, eta_label, run_seed};
use crate::config::{local_steps_for, HarnessConfig, NoiseSpec, ModelSpec, MIN_SEEDS};
use crate::par::try_par_map;
use crate::report::{Assertion, Report};
use crate::stats::{ols, pairwise_sum, quantile, resample_indices, BOOTSTRAP_RESAMPLES};

/// Minimum spacing, in steps, between recorded points.
const STRIDE: usize = 100;
/// `eta H` at or above which the ratio is compared with `K` directly.
pub const LARGE_ETA_H: f64 = 10.0;

/// `g` along one run, sampled at common step counts.
type Curve = Vec<f64>;

/// Decay rate `-d ln E[g] / dt` and the geometric mean of `E[g]` over the curve.
pub(crate) fn decay_rate(times: &[f64], curves: &[Curve], idx: &[usize]) -> Result<(f64, f64)> {
    let n = idx.len() as f64;
    let mut logs = Vec::with_capacity(times.len());
    for j in 0..times.len() {
        let m = pairwise_sum(&idx.iter().map(|&i| curves[i][j]).collect::<Vec<_>>()) / n;
        if !(m > 0.0) {
            return Err(Error::Domain(format!("E[g] = {m} at t = {} is not positive; cannot fit a log-rate", times[j])));
        }
        logs.push(m.ln());
    }
    let (slope, _) = ols(times, &logs);
    Ok((-slope, (pairwise_sum(&logs) / logs.len() as f64).exp()))
}

/// Seed average of the curves at each recorded time.
pub(crate) fn mean_curve(curves: &[Curve]) -> Vec<f64> {
    let n = curves.len() as f64;
    (0..curves[0].len()).map(|j| pairwise_sum(&curves.iter().map(|c| c[j]).collect::<Vec<_>>()) / n).collect()
}

/// `1 + (K - 1) psi(2 eta_h (1 + y^2))`.
pub fn predicted_ratio(k: usize, eta_h: f64, y: f64) -> Result<f64> {
    Ok(1.0 + (k as f64 - 1.0) * psi(2.0 * eta_h * (1.0 + y * y))?)
}

pub fn drift_ratio_experiment(cfg: &HarnessConfig) -> Result<Report> {
    cfg.validate()?;
    if !matches!(cfg.model, ModelSpec::Valley { noise: NoiseSpec::HessianAligned(_) }) {
        return Err(Error::InvalidConfig("drift_ratio needs the valley model with hessian_aligned noise".into()));
    }
    if cfg.alphas.is_empty() {
        return Err(Error::InvalidConfig("drift_ratio needs a non-empty alphas grid".into()));
    }
    let g = cfg.test_fns.first().ok_or_else(|| Error::InvalidConfig("drift_ratio needs a test function".into()))?;
    let model = cfg.model.build()?;
    let theta0 = cfg.theta0();
    let eta = cfg.etas[0];
    let mut rep = Report::new("drift_ratio", model.name());
    let steps = (cfg.horizon / (eta * eta)).round() as usize;
    if cfg.etas.len() > 1 {
        rep.note(format!("only the first learning rate {eta} is used"));
    }

    // Curves sampled at t = 0 and every `stride` steps; `stride` is a multiple of every H.
    let hs: Vec<usize> = cfg.alphas.iter().map(|&a| local_steps_for(a, eta)).collect();
    let stride = hs.iter().fold(STRIDE, |acc, &h| lcm(acc, h));
    let n_points = steps / stride;
    if n_points < 3 {
        return Err(Error::InvalidConfig(format!("horizon too short: only {n_points} recorded points with stride {stride}")));
    }
    let steps = n_points * stride;
    let times: Vec<f64> = (0..=n_points).map(|j| (j * stride) as f64 * eta * eta).collect();

    let run_curves = |cell: usize, h: Option<usize>| -> Result<Vec<Curve>> {
        let out = try_par_map(cfg.seeds, |i| {
            let seed = run_seed(cfg, cell, i, 0);
            let mut curve = Vec::with_capacity(n_points + 1);
            let rec = |_: usize, t: usize, th: &slowsde_core::Vector<f64>| {
                if t.is_multiple_of(stride) {
                    curve.push(g.eval(th));
                }
                true
            };
            let ok = match h {
                None => parallel_sgd_observe(&*model, &RunConfig::new(eta, cfg.workers, cfg.local_batch, 1, steps).with_seed(seed), &theta0, rec)?,
                Some(h) => local_sgd_observe(&*model, &RunConfig::new(eta, cfg.workers, cfg.local_batch, h, steps / h).with_seed(seed), &theta0, rec)?,
            };
            Ok((ok && curve.len() == n_points + 1).then_some(curve))
        })?;
        Ok(out.into_iter().flatten().collect())
    };

    let sgd = run_curves(0, None)?;
    if sgd.len() < MIN_SEEDS {
        rep.check(Assertion::holds("parallel SGD: enough usable seeds", false));
        return Ok(rep);
    }
    let all = |c: &[Curve]| (0..c.len()).collect::<Vec<_>>();
    let (sgd_rate, _) = decay_rate(&times, &sgd, &all(&sgd))?;
    let label = eta_label(eta);
    rep.stat(&label, "sgd decay rate", sgd_rate);
    rep.stat(&label, "steps", steps as f64);
    rep.samples("sgd", "t", &times);
    rep.samples("sgd", "mean g", &mean_curve(&sgd));

    for (j, (&alpha, &h)) in cfg.alphas.iter().zip(&hs).enumerate() {
        let cell = format!("etaH={}", eta * h as f64);
        let local = run_curves(j + 1, Some(h))?;
        if local.len() < cfg.seeds {
            rep.note(format!("{cell}: {} of {} seeds diverged and were excluded", cfg.seeds - local.len(), cfg.seeds));
        }
        if local.len() < MIN_SEEDS {
            rep.check(Assertion::holds(format!("{cell}: enough usable seeds"), false));
            continue;
        }
        let (rate, ybar) = decay_rate(&times, &local, &all(&local))?;
        let ratio = rate / sgd_rate;
        let eta_h = eta * h as f64;
        let pred = predicted_ratio(cfg.workers, eta_h, ybar)?;
        rep.stat(&cell, "H", h as f64);
        rep.stat(&cell, "local decay rate", rate);
        rep.stat(&cell, "geometric mean of E[g]", ybar);
        rep.stat(&cell, "ratio", ratio);
        rep.stat(&cell, "predicted ratio", pred);
        rep.samples(&cell, "t", &times);
        rep.samples(&cell, "mean g", &mean_curve(&local));

        let mut rng = slowsde_core::rng::stream(bootstrap_seed(cfg, j), &[]);
        let mut boots = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
        for _ in 0..BOOTSTRAP_RESAMPLES {
            let a = decay_rate(&times, &sgd, &resample_indices(sgd.len(), &mut rng));
            let b = decay_rate(&times, &local, &resample_indices(local.len(), &mut rng));
            if let (Ok((ra, _)), Ok((rb, _))) = (a, b) {
                boots.push(rb / ra);
            }
        }
        if !boots.is_empty() {
            rep.stat(&cell, "ratio ci low", quantile(&boots, 0.025));
            rep.stat(&cell, "ratio ci high", quantile(&boots, 0.975));
        }

        let k = cfg.workers as f64;
        let a = if h == 1 {
            Assertion::within(format!("{cell}: ratio with H = 1"), ratio, 0.9, 1.1).with_expected(1.0)
        } else if alpha >= LARGE_ETA_H {
            Assertion::within(format!("{cell}: ratio near K"), ratio, 0.85 * k, 1.15 * k).with_expected(k)
        } else {
            Assertion::within(format!("{cell}: ratio matches prediction"), ratio, 0.85 * pred, 1.15 * pred).with_expected(pred)
        };
        rep.check(a);
    }
    Ok(rep)
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    a / gcd(a, b) * b
}
