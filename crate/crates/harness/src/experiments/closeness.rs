//! Local SGD iterates stay within `O(sqrt(alpha eta))` of the manifold after burn-in.

use slowsde_core::manifold::{gf_project, make_frame, Projection};
use slowsde_core::models::LossModel;
use slowsde_core::optim::{local_sgd_observe, RunConfig};
use slowsde_core::{Error, Result};

use super::{bootstrap_seed, eta_label, run_seed};
use crate::config::{local_steps_for, HarnessConfig, MIN_SEEDS};
use crate::par::try_par_map;
use crate::report::{Assertion, Report};
use crate::stats::{bootstrap_slope_ci, log_log_slope, median, resample_indices, BOOTSTRAP_RESAMPLES};

pub const SLOPE_RANGE: (f64, f64) = (0.35, 0.65);
/// Accepted growth of the median when `alpha` doubles.
pub const DOUBLING_RANGE: (f64, f64) = (1.2, 1.7);

/// Burn-in rounds `ceil((20 / (alpha mu)) ln(1 / eta))`.
pub fn burn_in_rounds(alpha: f64, eta: f64, mu: f64) -> usize {
    ((20.0 / (alpha * mu)) * (1.0 / eta).ln()).ceil().max(0.0) as usize
}

struct Cell {
    /// Distances pooled over seeds and recorded rounds.
    dists: Vec<f64>,
    /// Per-seed blocks of `dists`, for resampling by seed.
    per_seed: Vec<Vec<f64>>,
    null_free: usize,
    seeds: usize,
}

fn run_cell(
    model: &dyn LossModel<f64>,
    cfg: &HarnessConfig,
    cell: usize,
    eta: f64,
    alpha: f64,
    mu: f64,
    theta0: &[f64],
) -> Result<Option<Cell>> {
    let h = local_steps_for(alpha, eta);
    let burn = burn_in_rounds(alpha, eta, mu);
    let run = RunConfig::new(eta, cfg.workers, cfg.local_batch, h, burn + cfg.points);
    let per = try_par_map(cfg.seeds, |i| {
        let mut d = Vec::with_capacity(cfg.points);
        let mut null = false;
        let ok = local_sgd_observe(model, &run.clone().with_seed(run_seed(cfg, cell, i, 0)), theta0, |s, _, th| {
            if s > burn {
                match gf_project(model, th) {
                    Projection::Point(p) => d.push(th.sub(&p).norm()),
                    Projection::Null => null = true,
                }
            }
            true
        })?;
        Ok(ok.then_some((d, null)))
    })?;
    let seeds = per.len();
    let kept: Vec<(Vec<f64>, bool)> = per.into_iter().flatten().collect();
    if kept.len() < MIN_SEEDS {
        return Ok(None);
    }
    let null_free = kept.iter().filter(|(_, n)| !n).count();
    let per_seed: Vec<Vec<f64>> = kept.into_iter().map(|(d, _)| d).collect();
    Ok(Some(Cell { dists: per_seed.concat(), per_seed, null_free, seeds }))
}

fn resampled_median(cell: &Cell, rng: &mut slowsde_core::rng::StreamRng) -> f64 {
    let idx = resample_indices(cell.per_seed.len(), rng);
    let pooled: Vec<f64> = idx.iter().flat_map(|&i| cell.per_seed[i].iter().copied()).collect();
    median(&pooled)
}

pub fn closeness_experiment(cfg: &HarnessConfig) -> Result<Report> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let theta0 = cfg.theta0();
    let mut rep = Report::new("closeness", model.name());
    let zeta0 = gf_project(&*model, &theta0)
        .into_point()
        .ok_or_else(|| Error::InvalidConfig("initial point does not project onto the manifold".into()))?;
    let frame = make_frame(&*model, &zeta0, cfg.alpha)?;
    let mu = frame.eig.eigenvalues[frame.rank.max(1) - 1];
    rep.stat("", "mu", mu);

    let mut null_free = 0;
    let mut total = 0;
    let mut scan = |label: String, cell: usize, eta: f64, alpha: f64, rep: &mut Report| -> Result<Option<Cell>> {
        let out = run_cell(&*model, cfg, cell, eta, alpha, mu, &theta0)?;
        rep.stat(&label, "burn_in_rounds", burn_in_rounds(alpha, eta, mu) as f64);
        match &out {
            Some(c) => {
                rep.stat(&label, "median_dist", median(&c.dists));
                rep.samples(&label, "dist", &c.dists);
                null_free += c.null_free;
                total += c.seeds;
            }
            None => rep.note(format!("{label}: excluded, fewer than {MIN_SEEDS} usable seeds")),
        }
        Ok(out)
    };

    let mut xs = Vec::new();
    let mut eta_cells = Vec::new();
    for (c, &eta) in cfg.etas.iter().enumerate() {
        if let Some(cell) = scan(format!("{},alpha={}", eta_label(eta), cfg.alpha), c, eta, cfg.alpha, &mut rep)? {
            xs.push(eta);
            eta_cells.push(cell);
        }
    }
    let mut alphas = Vec::new();
    let mut alpha_cells = Vec::new();
    for (j, &alpha) in cfg.alphas.iter().enumerate() {
        let label = format!("{},alpha={alpha}", eta_label(cfg.alpha_eta));
        if let Some(cell) = scan(label, 1000 + j, cfg.alpha_eta, alpha, &mut rep)? {
            alphas.push(alpha);
            alpha_cells.push(cell);
        }
    }

    if xs.len() >= 2 {
        let meds: Vec<f64> = eta_cells.iter().map(|c| median(&c.dists)).collect();
        let slope = log_log_slope(&xs, &meds);
        let ci = bootstrap_slope_ci(&xs, bootstrap_seed(cfg, 0), BOOTSTRAP_RESAMPLES, |c, rng| {
            resampled_median(&eta_cells[c], rng)
        });
        rep.fit("log median dist vs log eta", slope, ci);
        rep.check(Assertion::within("distance slope in eta", slope, SLOPE_RANGE.0, SLOPE_RANGE.1).with_expected(0.5));
    } else {
        rep.check(Assertion::holds("at least two usable learning rates", false));
    }

    if alphas.len() >= 2 {
        let meds: Vec<f64> = alpha_cells.iter().map(|c| median(&c.dists)).collect();
        let slope = log_log_slope(&alphas, &meds);
        let ci = bootstrap_slope_ci(&alphas, bootstrap_seed(cfg, 1), BOOTSTRAP_RESAMPLES, |c, rng| {
            resampled_median(&alpha_cells[c], rng)
        });
        rep.fit("log median dist vs log alpha", slope, ci);
        for w in 0..alphas.len() - 1 {
            let r = alphas[w + 1] / alphas[w];
            // Doubling maps to [1.2, 1.7]; other ratios use the matching power of r.
            let lo = r.powf(DOUBLING_RANGE.0.ln() / 2f64.ln());
            let hi = r.powf(DOUBLING_RANGE.1.ln() / 2f64.ln());
            rep.check(
                Assertion::within(format!("median growth alpha {} -> {}", alphas[w], alphas[w + 1]), meds[w + 1] / meds[w], lo, hi)
                    .with_expected(r.sqrt()),
            );
        }
    } else {
        rep.check(Assertion::holds("at least two usable alphas", false));
    }

    let frac = if total == 0 { 0.0 } else { null_free as f64 / total as f64 };
    rep.check(Assertion::at_least("fraction of seeds whose projections all exist", frac, cfg.delta));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burn_in_formula() {
        assert_eq!(burn_in_rounds(0.5, 0.01, 2.0), 93);
        assert_eq!(burn_in_rounds(1.0, 1.0, 1.0), 0);
    }
}
