//! Monte Carlo experiments, one module per claim.

mod closeness;
mod drift_ratio;
mod label_noise;
mod lsr;
mod moments;
mod tracking;
mod weak_approx;

pub use closeness::closeness_experiment;
pub use drift_ratio::drift_ratio_experiment;
pub use label_noise::label_noise_experiment;
pub use lsr::lsr_experiment;
pub use moments::moment_experiment;
pub use tracking::tracking_experiment;
pub use weak_approx::weak_approx_experiment;

use slowsde_core::rng::{derive_key, domain};
use slowsde_core::Result;

use crate::config::{Experiment, HarnessConfig};
use crate::report::Report;

/// Runs the experiment named in `cfg`.
pub fn run_experiment(cfg: &HarnessConfig) -> Result<Report> {
    match cfg.experiment {
        Experiment::Tracking => tracking_experiment(cfg),
        Experiment::Closeness => closeness_experiment(cfg),
        Experiment::WeakApprox => weak_approx_experiment(cfg),
        Experiment::Moments => moment_experiment(cfg),
        Experiment::DriftRatio => drift_ratio_experiment(cfg),
        Experiment::Lsr => lsr_experiment(cfg),
        Experiment::LabelNoise => label_noise_experiment(cfg),
    }
}

/// Seed of run `i` in configuration cell `cell`; `role` separates coupled runs.
pub(crate) fn run_seed(cfg: &HarnessConfig, cell: usize, i: usize, role: u64) -> u64 {
    derive_key(cfg.master_seed, &[domain::HARNESS, cfg.experiment.tag(), cell as u64, i as u64, role])
}

/// Seed for bootstrap resampling in `cell`.
pub(crate) fn bootstrap_seed(cfg: &HarnessConfig, cell: usize) -> u64 {
    derive_key(cfg.master_seed, &[domain::HARNESS, cfg.experiment.tag(), 0xb0_0000 + cell as u64])
}

pub(crate) fn eta_label(eta: f64) -> String {
    format!("eta={eta}")
}
