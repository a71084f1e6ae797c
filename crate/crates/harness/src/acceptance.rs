//! The acceptance suite: eleven criteria, each a [`Report`] plus a runtime budget.

use std::time::{Duration, Instant};

use slowsde_core::linalg::{Matrix, Vector};
use slowsde_core::manifold::{gf_project, make_frame, second_diff_phi};
use slowsde_core::models::{BlockQuadratic, LossModel, ManifoldHint, NoiseKind, QuadraticValley};
use slowsde_core::numerics::{big_f, psi};
use slowsde_core::optim::{local_sgd_observe, parallel_sgd_observe, run_local_sgd, run_parallel_sgd, run_post_local_sgd, RunConfig};
use slowsde_core::Result;

use crate::config::{Experiment, HarnessConfig, ModelSpec, NoiseSpec};
use crate::experiments::{
    closeness_experiment, drift_ratio_experiment, label_noise_experiment, lsr_experiment, moment_experiment,
    tracking_experiment, weak_approx_experiment,
};
use crate::par::with_threads;
use crate::report::{Assertion, Report};

pub struct Criterion {
    pub id: usize,
    pub title: &'static str,
    pub budget: Duration,
    pub run: fn() -> Result<Report>,
}

#[derive(Debug)]
pub struct Outcome {
    pub id: usize,
    pub title: &'static str,
    pub elapsed: Duration,
    pub budget: Duration,
    /// `Err` holds the message of a run that could not complete.
    pub report: std::result::Result<Report, String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.elapsed <= self.budget && self.report.as_ref().is_ok_and(Report::passed)
    }

    /// One line: id, verdict, title, runtime, and the failed checks if any.
    pub fn line(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let mut s = format!("C{:<2} {verdict}  {}  ({:.2} s / {} s)", self.id, self.title, self.elapsed.as_secs_f64(), self.budget.as_secs());
        match &self.report {
            Err(e) => s.push_str(&format!("  error: {e}")),
            Ok(r) => {
                let failed: Vec<String> = r
                    .assertions
                    .iter()
                    .filter(|a| !a.passed)
                    .map(|a| format!("{} = {:.4} not in [{:.4}, {:.4}]", a.name, a.observed, a.lower, a.upper))
                    .collect();
                if !failed.is_empty() {
                    s.push_str("  failed: ");
                    s.push_str(&failed.join("; "));
                }
            }
        }
        if self.elapsed > self.budget {
            s.push_str("  over budget");
        }
        s
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

pub fn criteria() -> Vec<Criterion> {
    vec![
        Criterion { id: 1, title: "special functions", budget: secs(1), run: special_functions },
        Criterion { id: 2, title: "manifold geometry", budget: secs(10), run: geometry },
        Criterion { id: 3, title: "algorithm equivalences", budget: secs(5), run: equivalences },
        Criterion { id: 4, title: "tracking error scaling", budget: secs(120), run: || tracking_experiment(&HarnessConfig::defaults(Experiment::Tracking)) },
        Criterion { id: 5, title: "closeness to the manifold", budget: secs(120), run: || closeness_experiment(&HarnessConfig::defaults(Experiment::Closeness)) },
        Criterion { id: 6, title: "weak approximation", budget: secs(600), run: || weak_approx_experiment(&HarnessConfig::defaults(Experiment::WeakApprox)) },
        Criterion { id: 7, title: "drift amplification", budget: secs(300), run: || drift_ratio_experiment(&HarnessConfig::defaults(Experiment::DriftRatio)) },
        Criterion { id: 8, title: "displacement moments", budget: secs(600), run: moments },
        Criterion { id: 9, title: "linear scaling rule", budget: secs(1), run: lsr },
        Criterion { id: 10, title: "label-noise covariance", budget: secs(120), run: || label_noise_experiment(&HarnessConfig::defaults(Experiment::LabelNoise)) },
        Criterion { id: 11, title: "determinism across thread counts", budget: secs(120), run: determinism },
    ]
}

pub fn run_criterion(c: &Criterion) -> Outcome {
    let start = Instant::now();
    let report = (c.run)().map_err(|e| e.to_string());
    Outcome { id: c.id, title: c.title, elapsed: start.elapsed(), budget: c.budget, report }
}

pub fn run_all() -> Vec<Outcome> {
    criteria().iter().map(run_criterion).collect()
}

fn special_functions() -> Result<Report> {
    let mut rep = Report::new("special_functions", "none");
    rep.check(Assertion::close("psi(0)", psi(0.0)?, 0.0, 0.0));
    rep.check(Assertion::close("psi(1)", psi(1.0)?, (-1.0f64).exp(), 1e-12));
    let mut prev = psi(0.0)?;
    let mut monotone = true;
    for i in 1..=100_000 {
        let v = psi(i as f64 * 1e-3)?;
        monotone &= v >= prev;
        prev = v;
    }
    rep.check(Assertion::holds("psi nondecreasing on [0, 100]", monotone));
    let h = 1e-4;
    for x in [0.1, 1.0, 5.0, 20.0] {
        let d = (big_f(x + h)? - big_f(x - h)?) / (2.0 * h);
        rep.check(Assertion::close(format!("F'({x}) = psi({x})"), d - psi(x)?, 0.0, 1e-6));
    }
    rep.check(Assertion::within("F(50) / 50", big_f(50.0)? / 50.0, 0.85, 1.0));
    Ok(rep)
}

fn geometry() -> Result<Report> {
    let model = QuadraticValley::<f64>::isotropic(1.0)?;
    let mut rep = Report::new("geometry", model.name());
    let ex = Matrix::outer(&[1.0, 0.0], &[1.0, 0.0]);
    let (mut idem, mut kills, mut phi_idem, mut fd): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let eps = 1e-3;
    for i in 0..10 {
        let y = -2.25 + 0.5 * i as f64;
        let z = model.point(&[y]);
        let f = make_frame(&model, &z, 1.0)?;
        idem = idem.max(f.p_par.matmul(&f.p_par).sub(&f.p_par).max_abs());
        kills = kills.max(f.p_par.matmul(&model.hessian(&z)).max_abs());
        let p = gf_project(&model, &[0.3, y]).into_point();
        let q = p.as_ref().and_then(|p| gf_project(&model, p).into_point());
        phi_idem = phi_idem.max(match (p, q) {
            (Some(p), Some(q)) => q.sub(&p).max_abs(),
            _ => f64::INFINITY,
        });
        let proj = |dx: f64| gf_project(&model, &[dx, y]).into_point();
        let d2 = second_diff_phi(&model, &f, &ex)?;
        match (proj(eps), proj(-eps)) {
            (Some(a), Some(b)) => {
                let oracle = a.add(&b).sub(&z.scale(2.0)).scale(1.0 / (eps * eps));
                fd = fd.max(oracle.sub(&d2).max_abs());
            }
            _ => fd = f64::INFINITY,
        }
    }
    rep.check(Assertion::at_most("P_par idempotence over 10 manifold points", idem, 1e-8));
    rep.check(Assertion::at_most("P_par annihilates the Hessian", kills, 1e-6));
    rep.check(Assertion::at_most("Phi idempotence", phi_idem, 2e-10));
    rep.check(Assertion::at_most("d^2 Phi[e_x e_x^T] against finite differences of Phi", fd, 1e-3));
    let z = Vector(vec![0.0, 1.0]);
    let d2 = second_diff_phi(&model, &make_frame(&model, &z, 1.0)?, &ex)?;
    rep.check(Assertion::close("d^2 Phi[e_x e_x^T] at (0, 1), x", d2[0], 0.0, 1e-6));
    rep.check(Assertion::close("d^2 Phi[e_x e_x^T] at (0, 1), y", d2[1], -0.5, 1e-6));
    Ok(rep)
}

fn thetas<M: LossModel<f64>>(m: &M, cfg: &RunConfig<f64>, theta0: &[f64], local: bool) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    let f = |_: usize, _: usize, th: &Vector<f64>| {
        out.push(th.0.clone());
        true
    };
    if local {
        local_sgd_observe(m, cfg, theta0, f)?;
    } else {
        parallel_sgd_observe(m, cfg, theta0, f)?;
    }
    Ok(out)
}

fn equivalences() -> Result<Report> {
    let valley = QuadraticValley::<f64>::isotropic(0.7)?;
    let cov = Matrix::from_f64(3, 3, &[1.0, 0.3, 0.2, 0.3, 1.5, 0.4, 0.2, 0.4, 0.8]);
    let block = BlockQuadratic::new(&[2.0], 3, NoiseKind::Custom { cov })?;
    let mut rep = Report::new("equivalences", "valley+block");
    let mut h1 = true;
    let mut post = true;
    for seed in 0..8u64 {
        for (k, bl) in [(1, 1), (4, 1), (3, 2)] {
            let cfg = RunConfig::new(0.05, k, bl, 1, 40).with_seed(seed);
            h1 &= thetas(&valley, &cfg, &[0.3, -1.0], true)? == thetas(&valley, &cfg, &[0.3, -1.0], false)?;
            h1 &= thetas(&block, &cfg, &[0.5, 0.1, -0.2], true)? == thetas(&block, &cfg, &[0.5, 0.1, -0.2], false)?;

            let mut cfg = RunConfig::new(0.05, k, bl, 5, 8).with_seed(seed);
            let th0 = [0.3, 1.0];
            let ends = |r: slowsde_core::optim::TrajectoryRecord<f64>| r.points.into_iter().map(|p| p.theta).collect::<Vec<_>>();
            cfg.switch_step = 0;
            post &= ends(run_post_local_sgd(&valley, &cfg, &th0)?) == ends(run_local_sgd(&valley, &cfg, &th0)?);
            cfg.switch_step = cfg.total_steps();
            post &= ends(run_post_local_sgd(&valley, &cfg, &th0)?) == ends(run_parallel_sgd(&valley, &cfg, &th0)?);
        }
    }
    rep.check(Assertion::holds("Local SGD with H = 1 equals parallel SGD bit for bit", h1));
    rep.check(Assertion::holds("Post-local SGD with t0 in {0, T} equals the pure algorithms bit for bit", post));

    let quiet = QuadraticValley::<f64>::noiseless();
    let eta = 0.05;
    let mut gd = true;
    for (k, h) in [(1, 1), (4, 5), (3, 2)] {
        let cfg = RunConfig::new(eta, k, 2, h, 10).with_seed(11);
        let local = thetas(&quiet, &cfg, &[0.4, 1.0], true)?;
        let mut x = Vector(vec![0.4, 1.0]);
        let mut want = vec![x.0.clone()];
        for _ in 0..cfg.rounds {
            for _ in 0..h {
                let g = quiet.grad(&x);
                x.axpy(-eta, &g);
            }
            want.push(x.0.clone());
        }
        gd &= local == want;
    }
    rep.check(Assertion::holds("noiseless Local SGD equals gradient descent bit for bit", gd));
    Ok(rep)
}

/// Block quadratic defaults plus the valley at `eta H = 1`.
pub fn moments_configs() -> [HarnessConfig; 2] {
    let block = HarnessConfig::defaults(Experiment::Moments);
    let valley = HarnessConfig {
        model: ModelSpec::Valley { noise: NoiseSpec::Isotropic(1.0) },
        alpha: 1.0,
        theta0: vec![0.0, 1.0],
        ..block.clone()
    };
    [block, valley]
}

fn moments() -> Result<Report> {
    let [block, valley] = moments_configs();
    let mut rep = moment_experiment(&block)?;
    rep.absorb(moment_experiment(&valley)?);
    Ok(rep)
}

fn lsr() -> Result<Report> {
    lsr_experiment(&HarnessConfig { seeds: 0, ..HarnessConfig::defaults(Experiment::Lsr) })
}

/// Smallest tracking cell, run on one thread and on four.
pub fn determinism_config() -> HarnessConfig {
    HarnessConfig { etas: vec![0.005], ..HarnessConfig::defaults(Experiment::Tracking) }
}

fn determinism() -> Result<Report> {
    let cfg = determinism_config();
    let one = with_threads(Some(1), || tracking_experiment(&cfg))??.to_csv();
    let four = with_threads(Some(4), || tracking_experiment(&cfg))??.to_csv();
    let mut rep = Report::new("determinism", "valley");
    rep.stat("threads=1", "csv bytes", one.len() as f64);
    rep.stat("threads=4", "csv bytes", four.len() as f64);
    rep.check(Assertion::holds("CSV bytes identical for 1 and 4 threads", one == four));
    Ok(rep)
}
