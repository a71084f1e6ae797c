//! Command dispatch, output files and exit codes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use slowsde_core::manifold::gf_project;
use slowsde_core::numerics::psi;
use slowsde_core::optim::{run_local_sgd, run_parallel_sgd, run_post_local_sgd, TrajectoryRecord};
use slowsde_core::slowsde::integrate_slow_sde;
use slowsde_harness::acceptance::{criteria, run_criterion, Outcome};
use slowsde_harness::config::Experiment;
use slowsde_harness::par::with_threads;
use slowsde_harness::report::Report;
use slowsde_harness::run_experiment;

use crate::config::{load, resolve, Algorithm, ConfigError, Resolved};
use crate::emit::emit_csv;
use crate::svg::{emit_svg, Plot, Series, Style};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "slowsde", version, about = "Local SGD, slow SDEs and Monte Carlo checks on toy landscapes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a key, e.g. `--set eta=0.02` or `--set sde.dt=1e-4` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand, PartialEq, Eq)]
pub enum Command {
    /// Run parallel, local or post-local SGD and write the trajectory.
    Run,
    /// Integrate a slow SDE from the projection of `theta0`.
    Sde,
    /// Run the experiment named by `experiment.kind` and check its assertions.
    Compare,
    /// Run the displacement-moment experiment.
    Moments,
    /// Run the full acceptance suite.
    Verify,
    /// Repeat `run` over `sweep.values` of `sweep.key`.
    Sweep,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub msg: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure { code: EXIT_CONFIG, msg: e.to_string() }
    }
}

impl From<slowsde_core::Error> for Failure {
    fn from(e: slowsde_core::Error) -> Self {
        use slowsde_core::Error::*;
        let code = match e {
            InvalidConfig(_) | LsrNotIntegral { .. } => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: EXIT_RUNTIME, msg: e.to_string() }
    }
}

type Res<T> = std::result::Result<T, Failure>;

struct Ctx<'a> {
    cli: &'a Cli,
}

impl Ctx<'_> {
    fn say(&self, s: &str) {
        if !self.cli.quiet {
            println!("{s}");
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cli.out.join(name)
    }

    fn threaded<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Res<R> {
        Ok(with_threads(self.cli.threads, f)?)
    }

    fn write_resolved(&self, r: &Resolved) -> Res<()> {
        std::fs::write(self.out("resolved.toml"), r.to_toml())?;
        Ok(())
    }
}

/// Runs the parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    }
}

fn dispatch(cli: &Cli) -> Res<i32> {
    if cli.threads == Some(0) {
        return Err(Failure { code: EXIT_CONFIG, msg: "--threads must be >= 1".into() });
    }
    let ctx = Ctx { cli };
    let table = load(cli.config.as_deref(), &cli.set)?;
    let forced = (cli.command == Command::Moments).then_some(Experiment::Moments);
    let resolved = resolve(&table, forced)?;
    std::fs::create_dir_all(&cli.out)?;
    ctx.write_resolved(&resolved)?;
    match cli.command {
        Command::Run => cmd_run(&ctx, &resolved),
        Command::Sde => cmd_sde(&ctx, &resolved),
        Command::Compare | Command::Moments => cmd_compare(&ctx, &resolved),
        Command::Verify => cmd_verify(&ctx),
        Command::Sweep => cmd_sweep(&ctx, &resolved),
    }
}

fn optimize(r: &Resolved) -> Res<TrajectoryRecord<f64>> {
    let model = r.model.build()?;
    Ok(match r.algorithm {
        Algorithm::Parallel => run_parallel_sgd(&*model, &r.run, &r.theta0)?,
        Algorithm::Local => run_local_sgd(&*model, &r.run, &r.theta0)?,
        Algorithm::PostLocal => run_post_local_sgd(&*model, &r.run, &r.theta0)?,
    })
}

fn trajectory_plot(title: &str, rec: &TrajectoryRecord<f64>) -> Plot {
    let pts: Vec<(f64, f64)> = rec.points.iter().map(|p| (p.t, p.loss)).collect();
    let log_y = pts.iter().all(|p| p.1 > 0.0);
    Plot {
        title: title.into(),
        x_label: "gradient steps".into(),
        y_label: "loss".into(),
        log_y,
        series: vec![Series { name: "loss".into(), points: pts, style: Style::Line }],
        ..Plot::default()
    }
}

fn final_summary(rec: &TrajectoryRecord<f64>) -> String {
    let mut s = format!("{} records, diverged: {}", rec.points.len(), rec.diverged);
    if let Some(p) = rec.points.last() {
        write!(s, ", final loss {:.6e}", p.loss).unwrap();
        if let Some(d) = p.dist {
            write!(s, ", distance to manifold {d:.6e}").unwrap();
        }
        if let Some(t) = p.tr_hess {
            write!(s, ", tr Hessian at projection {t:.6}").unwrap();
        }
    }
    s
}

fn cmd_run(ctx: &Ctx, r: &Resolved) -> Res<i32> {
    let rec = ctx.threaded(|| optimize(r))??;
    emit_csv(&rec.points, r.theta0.len(), &ctx.out("trajectory.csv"))?;
    emit_svg(&trajectory_plot(&format!("{} SGD on {}", r.algorithm.name(), r.model.name()), &rec), &ctx.out("trajectory.svg"))?;
    ctx.say(&format!("{} SGD, eta = {}, K = {}, H = {}, alpha = {}", r.algorithm.name(), r.run.eta, r.run.workers, r.run.local_steps, r.alpha()));
    ctx.say(&final_summary(&rec));
    if rec.diverged {
        return Err(Failure { code: EXIT_RUNTIME, msg: "run diverged".into() });
    }
    Ok(EXIT_OK)
}

fn cmd_sde(ctx: &Ctx, r: &Resolved) -> Res<i32> {
    let model = r.model.build()?;
    let zeta0 = gf_project(&*model, &r.theta0)
        .into_point()
        .ok_or_else(|| Failure { code: EXIT_RUNTIME, msg: "theta0 does not project onto the manifold".into() })?;
    let s = &r.sde;
    let rec = integrate_slow_sde(&*model, &s.kind, &zeta0, s.horizon, s.dt, r.seed, s.record_every)?;
    emit_csv(&rec.points, zeta0.len(), &ctx.out("sde.csv"))?;
    let pts: Vec<(f64, f64)> = rec.points.iter().filter_map(|p| Some((p.t, p.tr_hess?))).collect();
    let plot = Plot {
        title: format!("{} slow SDE on {}", s.kind.name(), r.model.name()),
        x_label: "t".into(),
        y_label: "tr Hessian".into(),
        series: vec![Series { name: "tr Hessian".into(), points: pts, style: Style::Line }],
        ..Plot::default()
    };
    emit_svg(&plot, &ctx.out("sde.svg"))?;
    ctx.say(&format!("{} slow SDE to t = {} with dt = {}: {} records", s.kind.name(), s.horizon, s.dt, rec.points.len()));
    if let Some(p) = rec.points.last() {
        ctx.say(&format!("final zeta {:?}, tr Hessian {:.6}", p.theta.0, p.tr_hess.unwrap_or(f64::NAN)));
    }
    Ok(EXIT_OK)
}

fn eta_of(config: &str) -> Option<f64> {
    config.strip_prefix("eta=")?.parse().ok()
}

/// Figures for a report: decay curves, or scaling in `eta`.
pub fn report_plot(rep: &Report) -> Option<Plot> {
    if rep.experiment == "drift_ratio" {
        let mut configs: Vec<&str> = Vec::new();
        for s in &rep.samples {
            if !configs.contains(&s.config.as_str()) {
                configs.push(&s.config);
            }
        }
        let series = configs
            .iter()
            .map(|c| {
                let col = |n: &str| rep.samples.iter().filter(|s| s.config == *c && s.name == n).map(|s| s.value).collect::<Vec<_>>();
                Series { name: c.to_string(), points: col("t").into_iter().zip(col("mean g")).collect(), style: Style::Line }
            })
            .collect();
        return Some(Plot { title: "decay of E[g]".into(), x_label: "t".into(), y_label: "E[g]".into(), log_y: true, series, ..Plot::default() });
    }
    let wanted = |n: &str| n == "q_delta" || n == "median_dist" || n.starts_with("max mean gap of");
    let mut names: Vec<&str> = Vec::new();
    for s in &rep.stats {
        if eta_of(&s.config).is_some() && wanted(&s.name) && !names.contains(&s.name.as_str()) {
            names.push(&s.name);
        }
    }
    if names.is_empty() {
        return None;
    }
    let series = names
        .iter()
        .map(|n| Series {
            name: n.to_string(),
            points: rep.stats.iter().filter(|s| s.name == *n).filter_map(|s| Some((eta_of(&s.config)?, s.value))).filter(|p| p.1 > 0.0).collect(),
            style: Style::Scatter,
        })
        .collect();
    let annotation = rep.fits.first().map(|f| format!("slope {:.3} [{:.3}, {:.3}]", f.slope, f.ci_low, f.ci_high));
    Some(Plot {
        title: format!("{} scaling", rep.experiment),
        x_label: "eta".into(),
        y_label: "statistic".into(),
        log_x: true,
        log_y: true,
        series,
        annotation,
    })
}

fn cmd_compare(ctx: &Ctx, r: &Resolved) -> Res<i32> {
    let cfg = r
        .experiment
        .as_ref()
        .ok_or_else(|| Failure::from(ConfigError::Missing("experiment.kind".into())))?;
    let rep = ctx.threaded(|| run_experiment(cfg))??;
    let path = rep.write_csv(&ctx.cli.out)?;
    std::fs::write(ctx.out("summary.txt"), rep.summary())?;
    if let Some(p) = report_plot(&rep) {
        // A plot that cannot be drawn (e.g. all gaps zero on a log axis) is skipped.
        let _ = emit_svg(&p, &ctx.out(&format!("{}.svg", rep.experiment)));
    }
    ctx.say(&rep.summary());
    ctx.say(&format!("report: {}", path.display()));
    Ok(if rep.passed() { EXIT_OK } else { EXIT_ASSERTION })
}

/// Table rows: criterion, assertion, target, observed, tolerance band, verdict.
pub fn verify_table(outcomes: &[Outcome]) -> String {
    let mut s = String::from("criterion | assertion | target | observed | tolerance | result\n");
    let num = |x: f64| format!("{x:.6}");
    for o in outcomes {
        match &o.report {
            Err(e) => writeln!(s, "C{} | {} | - | error: {e} | - | FAIL", o.id, o.title).unwrap(),
            Ok(rep) => {
                for a in &rep.assertions {
                    let target = a.expected.map(num).unwrap_or_else(|| "-".into());
                    let verdict = if a.passed { "PASS" } else { "FAIL" };
                    writeln!(s, "C{} | {} | {target} | {} | [{}, {}] | {verdict}", o.id, a.name, num(a.observed), num(a.lower), num(a.upper)).unwrap();
                }
            }
        }
        let within = o.elapsed <= o.budget;
        writeln!(
            s,
            "C{} | runtime (s) | - | {:.2} | [0, {}] | {}",
            o.id,
            o.elapsed.as_secs_f64(),
            o.budget.as_secs(),
            if within { "PASS" } else { "FAIL" }
        )
        .unwrap();
    }
    s
}

fn psi_plot() -> Plot {
    let pts = (0..=240).map(|i| i as f64 * 0.05).map(|x| (x, psi(x).expect("nonnegative argument"))).collect();
    Plot {
        title: "psi(x) = (exp(-x) - 1 + x) / x".into(),
        x_label: "x".into(),
        y_label: "psi".into(),
        series: vec![Series { name: "psi".into(), points: pts, style: Style::Line }],
        ..Plot::default()
    }
}

fn cmd_verify(ctx: &Ctx) -> Res<i32> {
    let outcomes = ctx.threaded(|| {
        criteria()
            .iter()
            .map(|c| {
                let o = run_criterion(c);
                if !ctx.cli.quiet {
                    println!("{}", o.line());
                }
                o
            })
            .collect::<Vec<_>>()
    })?;
    let table = verify_table(&outcomes);
    std::fs::write(ctx.out("verify.txt"), &table)?;
    emit_svg(&psi_plot(), &ctx.out("psi.svg"))?;
    ctx.say(&table);
    let failed = outcomes.iter().filter(|o| !o.passed()).count();
    ctx.say(&format!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len()));
    Ok(if failed == 0 { EXIT_OK } else { EXIT_ASSERTION })
}

fn cmd_sweep(ctx: &Ctx, r: &Resolved) -> Res<i32> {
    let sweep = r.sweep.as_ref().ok_or_else(|| Failure::from(ConfigError::Missing("sweep.key".into())))?;
    let runs: Vec<Resolved> = sweep.values.iter().map(|v| r.with_override(&sweep.key, v.clone())).collect::<Result<_, _>>()?;
    let mut table = format!("index,{},final_loss,final_dist,final_tr_hess,diverged\n", sweep.key);
    let mut pts = Vec::new();
    let mut any_diverged = false;
    for (i, (v, run)) in sweep.values.iter().zip(&runs).enumerate() {
        let rec = ctx.threaded(|| optimize(run))??;
        emit_csv(&rec.points, run.theta0.len(), &ctx.out(&format!("sweep_{i}.csv")))?;
        let last = rec.points.last();
        let f = |x: Option<f64>| x.map(|x| format!("{x:.16e}")).unwrap_or_default();
        writeln!(table, "{i},{},{},{},{},{}", v, f(last.map(|p| p.loss)), f(last.and_then(|p| p.dist)), f(last.and_then(|p| p.tr_hess)), rec.diverged).unwrap();
        ctx.say(&format!("{} = {v}: {}", sweep.key, final_summary(&rec)));
        any_diverged |= rec.diverged;
        if let (Some(x), Some(p)) = (v.as_float().or(v.as_integer().map(|i| i as f64)), last) {
            pts.push((x, p.loss));
        }
    }
    std::fs::write(ctx.out("sweep.csv"), table)?;
    if !pts.is_empty() {
        let plot = Plot {
            title: format!("final loss over {}", sweep.key),
            x_label: sweep.key.clone(),
            y_label: "final loss".into(),
            log_y: pts.iter().all(|p| p.1 > 0.0),
            series: vec![Series { name: "final loss".into(), points: pts, style: Style::Scatter }],
            ..Plot::default()
        };
        emit_svg(&plot, &ctx.out("sweep.svg"))?;
    }
    if any_diverged {
        return Err(Failure { code: EXIT_RUNTIME, msg: "at least one sweep run diverged".into() });
    }
    Ok(EXIT_OK)
}

/// Directory entries of `dir` whose names end with `suffix`, sorted.
pub fn files_with_suffix(dir: &Path, suffix: &str) -> std::io::Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    v.sort();
    Ok(v)
}
