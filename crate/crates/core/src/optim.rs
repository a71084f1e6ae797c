//! Parallel SGD, Local SGD and Post-local SGD, plus the linear scaling rule.
//!
//! Worker `k` in round `s` at local step `j` draws its gradient noise from
//! `stream(seed, [OPTIM, s, k, j])`; a parallel-SGD step `t` is treated as
//! round `t`, step 0. With `H = 1` the two algorithms therefore consume
//! identical noise and, because both average the stepped parameters with
//! [`anchored_mean`], produce bit-identical iterates.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{anchored_mean, Vector};
use crate::manifold::{gf_project, Projection};
use crate::models::{stoch_grad_indexed, stoch_grad_unchecked, LossModel};
use crate::rng::{domain, stream};
use crate::samplers::{SamplerKind, SamplerState};
use crate::scalar::Real;

/// Iterates with norm above this are reported as divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    pub eta: T,
    pub workers: usize,
    pub local_batch: usize,
    /// `H`, local steps per round.
    pub local_steps: usize,
    pub rounds: usize,
    /// Post-local switching step `t0`.
    pub switch_step: usize,
    pub sampler: SamplerKind,
    pub seed: u64,
    /// Record every this many rounds (parallel SGD: steps).
    pub record_every: usize,
    /// Compute `Phi` and the derived columns at recorded points.
    pub project: bool,
}

impl<T: Real> RunConfig<T> {
    pub fn new(eta: T, workers: usize, local_batch: usize, local_steps: usize, rounds: usize) -> Self {
        RunConfig {
            eta,
            workers,
            local_batch,
            local_steps,
            rounds,
            switch_step: 0,
            sampler: SamplerKind::WithReplacement,
            seed: 0,
            record_every: 1,
            project: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `alpha = eta * H`.
    pub fn alpha(&self) -> T {
        self.eta * T::from_count(self.local_steps)
    }

    /// Global batch size `B = K * B_loc`.
    pub fn global_batch(&self) -> usize {
        self.workers * self.local_batch
    }

    /// Total number of gradient steps, `rounds * H`.
    pub fn total_steps(&self) -> usize {
        self.rounds * self.local_steps
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > T::zero()) || !self.eta.is_finite() {
            return Err(Error::InvalidConfig(format!("eta must be positive, got {}", self.eta)));
        }
        if self.workers == 0 || self.local_batch == 0 || self.local_steps == 0 {
            return Err(Error::InvalidConfig("K, B_loc and H must all be >= 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint<T> {
    /// Round index (parallel SGD: step index).
    pub s: usize,
    /// Elapsed time: gradient steps for the optimizers, continuous time for slow SDEs.
    pub t: T,
    pub theta: Vector<T>,
    pub phi: Option<Vector<T>>,
    pub dist: Option<T>,
    pub loss: T,
    pub tr_hess: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord<T> {
    pub config: RunConfig<T>,
    pub points: Vec<TrajectoryPoint<T>>,
    pub diverged: bool,
    /// First round index of the local phase in Post-local SGD.
    pub switch_round: Option<usize>,
    pub wall_time_secs: f64,
}

impl<T: Real> TrajectoryRecord<T> {
    pub fn last_theta(&self) -> Option<&Vector<T>> {
        self.points.last().map(|p| &p.theta)
    }
}

/// Which phase a round belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Parallel,
    Local,
}

/// Builds a trajectory point at `theta`, projecting when requested.
pub fn record_point<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    s: usize,
    t: usize,
    theta: &Vector<T>,
    project: bool,
) -> TrajectoryPoint<T> {
    let (phi, dist, tr_hess) = if project {
        match gf_project(model, theta) {
            Projection::Point(p) => {
                let dist = theta.sub(&p).norm();
                let tr = model.hessian(&p).trace();
                (Some(p), Some(dist), Some(tr))
            }
            Projection::Null => (None, None, None),
        }
    } else {
        (None, None, None)
    };
    TrajectoryPoint { s, t: T::from_count(t), theta: theta.clone(), phi, dist, loss: model.loss(theta), tr_hess }
}

/// Optimizer state shared by all three algorithms.
struct Engine<'a, T: Real, M: LossModel<T> + ?Sized> {
    model: &'a M,
    cfg: &'a RunConfig<T>,
    sampler: Option<SamplerState>,
}

impl<'a, T: Real, M: LossModel<T> + ?Sized> Engine<'a, T, M> {
    fn new(model: &'a M, cfg: &'a RunConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let sampler = match cfg.sampler {
            SamplerKind::WithReplacement => None,
            SamplerKind::WithoutReplacement => {
                let n = model.dataset_size().ok_or_else(|| {
                    Error::InvalidConfig(format!("model {} has no finite dataset to sample without replacement", model.name()))
                })?;
                Some(SamplerState::new(cfg.sampler, n, cfg.workers, cfg.local_batch, cfg.seed)?)
            }
        };
        Ok(Engine { model, cfg, sampler })
    }

    fn grad(&mut self, theta: &[T], worker: usize, counters: [u64; 3]) -> Result<Vector<T>> {
        let mut rng = stream(self.cfg.seed, &[domain::OPTIM, counters[0], counters[1], counters[2]]);
        match self.sampler.as_mut() {
            None => Ok(stoch_grad_unchecked(self.model, theta, self.cfg.local_batch, &mut rng)),
            Some(s) => {
                let idx = s.next_batch(worker, &mut rng)?;
                Ok(stoch_grad_indexed(self.model, theta, &idx, &mut rng))
            }
        }
    }

    /// One round: `h` lockstep local steps on every worker from `theta`, then averaging.
    fn round(&mut self, theta: &Vector<T>, round: u64, h: usize) -> Result<Vector<T>> {
        let k = self.cfg.workers;
        let mut locals: Vec<Vector<T>> = vec![theta.clone(); k];
        for j in 0..h {
            for (w, x) in locals.iter_mut().enumerate() {
                let g = self.grad(x, w, [round, w as u64, j as u64])?;
                x.axpy(-self.cfg.eta, &g);
            }
        }
        Ok(anchored_mean(&locals))
    }
}

fn diverged<T: Real>(theta: &Vector<T>) -> bool {
    !theta.is_finite() || theta.norm() > T::lit(DIVERGENCE_NORM)
}

/// Schedule of rounds: `(round counter, steps in round, phase)`.
fn schedule<T: Real>(cfg: &RunConfig<T>, kind: Phase, switch: Option<usize>) -> Vec<(u64, usize, Phase)> {
    match (kind, switch) {
        (Phase::Parallel, _) => (0..cfg.total_steps() as u64).map(|t| (t, 1, Phase::Parallel)).collect(),
        (Phase::Local, None) => (0..cfg.rounds as u64).map(|s| (s, cfg.local_steps, Phase::Local)).collect(),
        (Phase::Local, Some(t0)) => {
            let local_rounds = (cfg.total_steps() - t0) / cfg.local_steps;
            (0..t0 as u64)
                .map(|t| (t, 1, Phase::Parallel))
                .chain((0..local_rounds as u64).map(|r| (t0 as u64 + r, cfg.local_steps, Phase::Local)))
                .collect()
        }
    }
}

/// Runs an optimizer and calls `observe(s, t, theta)` after every round (and at `s = 0`).
///
/// Returns `false` when the run diverged. `observe` can stop the run early by
/// returning `false`.
fn drive<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    cfg: &RunConfig<T>,
    theta0: &[T],
    kind: Phase,
    switch: Option<usize>,
    mut observe: impl FnMut(usize, usize, &Vector<T>) -> bool,
) -> Result<bool> {
    if theta0.len() != model.dim() {
        return Err(Error::Dimension { expected: model.dim(), got: theta0.len() });
    }
    let mut engine = Engine::new(model, cfg)?;
    let mut theta = Vector(theta0.to_vec());
    if diverged(&theta) {
        return Err(Error::NonFinite("initial parameters".into()));
    }
    let mut t = 0;
    if !observe(0, 0, &theta) {
        return Ok(true);
    }
    for (i, (counter, h, _)) in schedule(cfg, kind, switch).into_iter().enumerate() {
        theta = engine.round(&theta, counter, h)?;
        t += h;
        if diverged(&theta) {
            return Ok(false);
        }
        if !observe(i + 1, t, &theta) {
            break;
        }
    }
    Ok(true)
}

/// Parallel SGD driven by a per-step observer; see [`run_parallel_sgd`].
pub fn parallel_sgd_observe<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    cfg: &RunConfig<T>,
    theta0: &[T],
    observe: impl FnMut(usize, usize, &Vector<T>) -> bool,
) -> Result<bool> {
    drive(model, cfg, theta0, Phase::Parallel, None, observe)
}

/// Local SGD driven by a per-round observer; see [`run_local_sgd`].
pub fn local_sgd_observe<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    cfg: &RunConfig<T>,
    theta0: &[T],
    observe: impl FnMut(usize, usize, &Vector<T>) -> bool,
) -> Result<bool> {
    drive(model, cfg, theta0, Phase::Local, None, observe)
}

fn check_switch<T: Real>(cfg: &RunConfig<T>) -> Result<()> {
    let total = cfg.total_steps();
    if cfg.switch_step > total || !(total - cfg.switch_step).is_multiple_of(cfg.local_steps.max(1)) {
        return Err(Error::InvalidConfig(format!(
            "post-local switch step t0 = {} must satisfy t0 <= T = {total} with T - t0 a multiple of H = {}",
            cfg.switch_step, cfg.local_steps
        )));
    }
    Ok(())
}

/// Post-local SGD driven by a per-round observer; see [`run_post_local_sgd`].
pub fn post_local_sgd_observe<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    cfg: &RunConfig<T>,
    theta0: &[T],
    observe: impl FnMut(usize, usize, &Vector<T>) -> bool,
) -> Result<bool> {
    cfg.validate()?;
    check_switch(cfg)?;
    drive(model, cfg, theta0, Phase::Local, Some(cfg.switch_step), observe)
}

fn collect<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    cfg: &RunConfig<T>,
    theta0: &[T],
    kind: Phase,
    switch: Option<usize>,
) -> Result<TrajectoryRecord<T>> {
    let start = Instant::now();
    let last_index = match (kind, switch) {
        (Phase::Parallel, _) => cfg.total_steps(),
        (Phase::Local, None) => cfg.rounds,
        (Phase::Local, Some(t0)) => t0 + (cfg.total_steps() - t0) / cfg.local_steps.max(1),
    };
    let mut points = Vec::new();
    let ok = drive(model, cfg, theta0, kind, switch, |s, t, theta| {
        if s % cfg.record_every == 0 || s == last_index {
            points.push(record_point(model, s, t, theta, cfg.project));
        }
        true
    })?;
    Ok(TrajectoryRecord {
        config: cfg.clone(),
        points,
        diverged: !ok,
        switch_round: switch,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Parallel SGD for `rounds * H` steps: `theta <- mean_k (theta - eta g_k)`.
pub fn run_parallel_sgd<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    cfg: &RunConfig<T>,
    theta0: &[T],
) -> Result<TrajectoryRecord<T>> {
    collect(model, cfg, theta0, Phase::Parallel, None)
}

/// Local SGD: each round runs `K` independent `H`-step chains from the average.
pub fn run_local_sgd<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    cfg: &RunConfig<T>,
    theta0: &[T],
) -> Result<TrajectoryRecord<T>> {
    collect(model, cfg, theta0, Phase::Local, None)
}

/// Parallel SGD for `t0` steps, then Local SGD rounds until `rounds * H` steps.
pub fn run_post_local_sgd<T: Real, M: LossModel<T> + ?Sized>(
    model: &M,
    cfg: &RunConfig<T>,
    theta0: &[T],
) -> Result<TrajectoryRecord<T>> {
    cfg.validate()?;
    check_switch(cfg)?;
    collect(model, cfg, theta0, Phase::Local, Some(cfg.switch_step))
}

fn integral(x: f64) -> Option<usize> {
    let r = x.round();
    ((x - r).abs() <= 1e-9 * r.abs().max(1.0) && r >= 1.0).then_some(r as usize)
}

/// Linear scaling rule: `eta -> kappa eta`, `K -> kappa K`, `H -> H / kappa`.
pub fn apply_lsr<T: Real>(cfg: &RunConfig<T>, kappa: T) -> Result<RunConfig<T>> {
    let k = kappa.to_f64_lossy();
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidConfig(format!("kappa must be positive, got {k}")));
    }
    let workers = integral(k * cfg.workers as f64);
    let steps = integral(cfg.local_steps as f64 / k);
    let what = match (workers, steps) {
        (Some(w), Some(h)) => {
            let mut out = cfg.clone();
            out.eta = cfg.eta * kappa;
            out.workers = w;
            out.local_steps = h;
            return Ok(out);
        }
        (None, _) => "K",
        (Some(_), None) => "H",
    };
    Err(Error::LsrNotIntegral { kappa: k, what, suggestion: nearest_admissible_kappa(cfg, k) })
}

/// Admissible `kappa` are `H / h` for integers `h >= 1` with `kappa K` integral.
fn nearest_admissible_kappa<T: Real>(cfg: &RunConfig<T>, kappa: f64) -> f64 {
    let h0 = cfg.local_steps;
    (1..=h0)
        .map(|h| h0 as f64 / h as f64)
        .filter(|&c| integral(c * cfg.workers as f64).is_some())
        .min_by(|a, b| (a - kappa).abs().partial_cmp(&(b - kappa).abs()).expect("finite"))
        .unwrap_or(1.0)
}
