use proptest::prelude::*;
use slowsde_harness::config::{Experiment, HarnessConfig, ModelSpec, NoiseSpec, TestFn};
use slowsde_harness::par::with_threads;
use slowsde_harness::{run_experiment, Report};

fn small(e: Experiment) -> HarnessConfig {
    let mut c = HarnessConfig::defaults(e);
    match e {
        Experiment::Tracking | Experiment::Closeness => {
            c.etas = vec![0.04, 0.02];
            c.seeds = 30;
            c.points = 10;
        }
        Experiment::WeakApprox => {
            c.etas = vec![0.04, 0.02];
            c.seeds = 30;
            c.horizon = 0.2;
            c.points = 4;
        }
        Experiment::Moments => c.seeds = 300,
        Experiment::DriftRatio => {
            c.seeds = 30;
            c.horizon = 0.5;
            c.alphas = vec![1.0];
        }
        Experiment::Lsr => {
            c.seeds = 30;
            c.horizon = 0.1;
            c.sde_dt = 1e-2;
        }
        Experiment::LabelNoise => c.mc_samples = 5000,
    }
    c
}

fn well_formed(r: &Report) {
    assert!(!r.assertions.is_empty(), "{}", r.experiment);
    for a in &r.assertions {
        assert!(a.lower <= a.upper, "{}: {}", r.experiment, a.name);
        assert_eq!(a.passed, a.observed >= a.lower && a.observed <= a.upper, "{}: {}", r.experiment, a.name);
    }
    for f in &r.fits {
        assert!(f.ci_low <= f.ci_high || f.slope.is_nan(), "{}: {}", r.experiment, f.name);
    }
}

#[test]
fn every_experiment_is_reproducible_and_thread_independent() {
    for e in Experiment::ALL {
        let c = small(e);
        let a = with_threads(Some(1), || run_experiment(&c)).unwrap().unwrap();
        let b = with_threads(Some(3), || run_experiment(&c)).unwrap().unwrap();
        well_formed(&a);
        assert_eq!(a.to_csv(), b.to_csv(), "{e}");
        assert_eq!(a.experiment, e.name());
    }
}

#[test]
fn master_seed_changes_samples() {
    let c = small(Experiment::Tracking);
    let d = HarnessConfig { master_seed: 1, ..c.clone() };
    assert_ne!(run_experiment(&c).unwrap().to_csv(), run_experiment(&d).unwrap().to_csv());
}

#[test]
fn too_few_seeds_is_a_config_error() {
    let c = HarnessConfig { seeds: 29, ..small(Experiment::Tracking) };
    assert!(matches!(run_experiment(&c), Err(slowsde_core::Error::InvalidConfig(_))));
}

#[test]
fn drift_ratio_requires_hessian_aligned_noise() {
    let c = HarnessConfig { model: ModelSpec::Valley { noise: NoiseSpec::Isotropic(1.0) }, ..small(Experiment::DriftRatio) };
    assert!(run_experiment(&c).is_err());
}

#[test]
fn block_moments_pass_at_moderate_seed_counts() {
    let r = run_experiment(&small(Experiment::Moments)).unwrap();
    assert!(r.passed(), "{}", r.summary());
}

#[test]
fn label_noise_covariance_matches_hessian() {
    let r = run_experiment(&small(Experiment::LabelNoise)).unwrap();
    assert!(r.passed(), "{}", r.summary());
    let closed = r.stats.iter().find(|s| s.name == "closed-form relative error").unwrap();
    assert!(closed.value < 1e-6);
}

proptest! {
    #[test]
    fn test_function_display_round_trips(c in -5i32..5, i in 0usize..3, p in 1u32..4, k in -3i32..3) {
        let src = format!("{c}*x{i}^{p} + {k}");
        let f: TestFn = src.parse().unwrap();
        let g: TestFn = f.to_string().parse().unwrap();
        let x = [0.3, -1.2, 2.0];
        prop_assert!((f.eval(&x) - g.eval(&x)).abs() <= 1e-12 * (1.0 + f.eval(&x).abs()));
        let want = c as f64 * x[i].powi(p as i32) + k as f64;
        prop_assert!((f.eval(&x) - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }
}
