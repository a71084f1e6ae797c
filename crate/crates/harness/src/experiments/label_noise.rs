//! At an interpolating minimizer with label noise, the gradient-noise covariance equals the Hessian.

use slowsde_core::linalg::{Matrix, Vector};
use slowsde_core::models::LossModel;
use slowsde_core::numerics::sym_eig_default;
use slowsde_core::rng::stream;
use slowsde_core::{Error, Result};

use super::run_seed;
use crate::config::HarnessConfig;
use crate::par::par_map;
use crate::report::{Assertion, Report};
use crate::stats::pairwise_sum;

/// Allowed relative Frobenius error of the Monte Carlo covariance.
pub const REL_TOL: f64 = 0.1;
/// Gradient norm at which gradient descent is considered converged.
pub const GRAD_TOL: f64 = 1e-8;
const MAX_GD_STEPS: usize = 2_000_000;
const CHUNK: usize = 1000;

/// Gradient descent from `theta0` until `|grad L| < GRAD_TOL`.
pub(crate) fn descend(model: &dyn LossModel<f64>, theta0: &[f64], eta: f64) -> Result<(Vector<f64>, usize)> {
    let mut th = Vector(theta0.to_vec());
    for step in 0..MAX_GD_STEPS {
        let g = model.grad(&th);
        if !g.is_finite() {
            return Err(Error::NonFinite("gradient during descent".into()));
        }
        if g.norm() < GRAD_TOL {
            return Ok((th, step));
        }
        th.axpy(-eta, &g);
    }
    Err(Error::NonConvergentFlow { steps: MAX_GD_STEPS, time: eta * MAX_GD_STEPS as f64 })
}

/// Monte Carlo estimate of `E[xi xi^T]` from `n` single-sample noise draws.
pub(crate) fn noise_second_moment(model: &dyn LossModel<f64>, theta: &[f64], n: usize, seed: u64) -> Matrix<f64> {
    let d = theta.len();
    let chunks = n.div_ceil(CHUNK);
    let parts = par_map(chunks, |c| {
        let mut rng = stream(seed, &[c as u64]);
        let mut acc = vec![0.0; d * d];
        for _ in 0..CHUNK.min(n - c * CHUNK) {
            let xi = model.sample_noise(theta, &mut rng);
            for i in 0..d {
                for j in 0..d {
                    acc[i * d + j] += xi[i] * xi[j];
                }
            }
        }
        acc
    });
    let sums: Vec<f64> = (0..d * d).map(|e| pairwise_sum(&parts.iter().map(|p| p[e]).collect::<Vec<_>>())).collect();
    Matrix::from_row_slice(d, d, &sums).scale(1.0 / n as f64)
}

pub fn label_noise_experiment(cfg: &HarnessConfig) -> Result<Report> {
    cfg.validate()?;
    if cfg.mc_samples == 0 {
        return Err(Error::InvalidConfig("mc_samples must be >= 1".into()));
    }
    let model = cfg.model.build()?;
    let mut rep = Report::new("label_noise", model.name());
    let (theta, steps) = descend(&*model, &cfg.theta0(), cfg.etas[0])?;
    let hess = model.hessian(&theta);
    let hn = hess.frobenius();
    if !(hn > 0.0) {
        return Err(Error::Domain("Hessian vanishes at the limit point".into()));
    }
    let rank = sym_eig_default(&hess)?.rank();
    let cell = "gd limit";
    rep.stat(cell, "gd steps", steps as f64);
    rep.stat(cell, "grad norm", model.grad(&theta).norm());
    if let Some(min) = model.min_loss() {
        rep.stat(cell, "loss gap", model.loss(&theta) - min);
    }
    rep.stat(cell, "hessian rank", rank as f64);
    rep.stat(cell, "closed-form relative error", model.noise_covariance(&theta).sub(&hess).frobenius() / hn);

    let sigma = noise_second_moment(&*model, &theta, cfg.mc_samples, run_seed(cfg, 0, 0, 0));
    let rel = sigma.sub(&hess).frobenius() / hn;
    rep.stat(cell, "mc samples", cfg.mc_samples as f64);
    rep.check(Assertion::at_most("relative Frobenius error of the sampled noise covariance", rel, REL_TOL).with_expected(0.0));
    Ok(rep)
}
