use std::path::Path;
use std::process::{Command, Output};

use slowsde_cli::app::files_with_suffix;
use slowsde_cli::emit::parse_csv;

const MINIMAL: &str = "model = \"valley\"\neta = 0.01\nK = 4\nB_loc = 8\nH = 50\nrounds = 20\nseed = 7\n";

fn slowsde(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slowsde"))
        .current_dir(dir)
        .env_remove("SLOWSDE_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), MINIMAL).unwrap();
    dir
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn run_writes_trajectory_and_resolved_config() {
    let dir = setup();
    let out = slowsde(dir.path(), &["run", "--config", "c.toml", "--out", "o", "--quiet"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let resolved = read(dir.path().join("o/resolved.toml"));
    assert!(resolved.contains("alpha = 0.5"));
    assert!(resolved.contains("seed = 7"));
    let (d, pts) = parse_csv(&read(dir.path().join("o/trajectory.csv"))).unwrap();
    assert_eq!((d, pts.len()), (2, 21));
    assert_eq!(pts[0].theta.0, vec![0.5, 1.0]);
    assert!(read(dir.path().join("o/trajectory.svg")).starts_with("<svg"));
}

#[test]
fn overrides_change_alpha() {
    let dir = setup();
    let out = slowsde(dir.path(), &["run", "--config", "c.toml", "--set", "eta=0.02", "--out", "o", "--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(read(dir.path().join("o/resolved.toml")).contains("alpha = 1.0"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = setup();
    let out = slowsde(dir.path(), &["run", "--config", "c.toml", "--set", "momentum=0.9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key: momentum"));
}

#[test]
fn missing_experiment_kind_is_a_config_error() {
    let dir = setup();
    let out = slowsde(dir.path(), &["compare", "--config", "c.toml", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_precedence_cli_over_env_over_file() {
    let dir = setup();
    let seed_of = |args: &[&str], env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_slowsde"));
        c.current_dir(dir.path()).env_remove("SLOWSDE_SEED");
        if let Some(e) = env {
            c.env("SLOWSDE_SEED", e);
        }
        let out = c.args(["run", "--config", "c.toml", "--out", "o", "--quiet"]).args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(0));
        let t: toml::Table = read(dir.path().join("o/resolved.toml")).parse().unwrap();
        t["seed"].as_integer().unwrap()
    };
    assert_eq!(seed_of(&[], None), 7);
    assert_eq!(seed_of(&[], Some("11")), 11);
    assert_eq!(seed_of(&["--set", "seed=13"], Some("11")), 13);
}

#[test]
fn reports_are_byte_identical_across_thread_counts() {
    let dir = setup();
    let args = |o: &'static str, threads: &'static str| {
        vec![
            "compare", "--config", "c.toml", "--set", "experiment.kind=tracking", "--set", "experiment.etas=[0.04, 0.02]",
            "--set", "experiment.seeds=30", "--out", o, "--threads", threads, "--quiet",
        ]
    };
    for (o, n) in [("a", "1"), ("b", "3")] {
        let out = slowsde(dir.path(), &args(o, n));
        assert!(matches!(out.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv = |o: &str| read(&files_with_suffix(&dir.path().join(o), ".csv").unwrap()[0]);
    assert_eq!(csv("a"), csv("b"));
    assert_eq!(read(dir.path().join("a/tracking.svg")), read(dir.path().join("b/tracking.svg")));
}

#[test]
fn failed_assertion_exits_with_one() {
    let dir = setup();
    // Without noise both runs are gradient descent, so the error is zero and no slope exists.
    let out = slowsde(
        dir.path(),
        &["compare", "--config", "c.toml", "--set", "noise=none", "--set", "experiment.kind=tracking", "--set", "experiment.etas=[0.04, 0.02]", "--set", "experiment.seeds=30", "--out", "o", "--quiet"],
    );
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(dir.path().join("o/summary.txt")).contains("[FAIL]"));
}

#[test]
fn sde_and_sweep_commands_write_outputs() {
    let dir = setup();
    let out = slowsde(dir.path(), &["sde", "--config", "c.toml", "--set", "sde.horizon=0.2", "--set", "sde.kind=label_noise_local", "--set", "noise=hessian_aligned", "--out", "s", "--quiet"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, pts) = parse_csv(&read(dir.path().join("s/sde.csv"))).unwrap();
    // Default dt is min(1e-3, T / 1000), recorded every 10 steps.
    assert_eq!(pts.len(), 101);
    assert!(pts.windows(2).all(|w| w[1].tr_hess.unwrap() <= w[0].tr_hess.unwrap()));

    let out = slowsde(dir.path(), &["sweep", "--config", "c.toml", "--set", "sweep.key=K", "--set", "sweep.values=[1, 2]", "--out", "w", "--quiet"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(dir.path().join("w/sweep.csv")).lines().count(), 3);
    assert!(dir.path().join("w/sweep_1.csv").exists());
}

#[test]
fn zero_threads_is_rejected() {
    let dir = setup();
    let out = slowsde(dir.path(), &["run", "--config", "c.toml", "--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
}
