//! Experiment configuration.

use std::fmt;
use std::str::FromStr;

use slowsde_core::linalg::Matrix;
use slowsde_core::models::{BlockQuadratic, LossModel, NoiseKind, QuadraticValley, SoftmaxLabelNoise};
use slowsde_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Tracking,
    Closeness,
    WeakApprox,
    Moments,
    DriftRatio,
    Lsr,
    LabelNoise,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Tracking,
        Experiment::Closeness,
        Experiment::WeakApprox,
        Experiment::Moments,
        Experiment::DriftRatio,
        Experiment::Lsr,
        Experiment::LabelNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Tracking => "tracking",
            Experiment::Closeness => "closeness",
            Experiment::WeakApprox => "weak_approx",
            Experiment::Moments => "moments",
            Experiment::DriftRatio => "drift_ratio",
            Experiment::Lsr => "lsr",
            Experiment::LabelNoise => "label_noise",
        }
    }

    /// Tag mixed into every seed of this experiment.
    pub(crate) fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
            Error::InvalidConfig(format!("unknown experiment {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

/// Gradient noise of the toy models.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    None,
    Isotropic(f64),
    HessianAligned(f64),
    /// Row-major `d x d` covariance.
    Custom(Vec<f64>),
}

impl NoiseSpec {
    pub fn kind(&self, dim: usize) -> Result<NoiseKind<f64>> {
        Ok(match self {
            NoiseSpec::None => NoiseKind::none(),
            NoiseSpec::Isotropic(s) => NoiseKind::Isotropic { sigma2: *s },
            NoiseSpec::HessianAligned(c) => NoiseKind::HessianAligned { c: *c },
            NoiseSpec::Custom(v) => {
                if v.len() != dim * dim {
                    return Err(Error::InvalidConfig(format!(
                        "custom covariance needs {} entries for d = {dim}, got {}",
                        dim * dim,
                        v.len()
                    )));
                }
                NoiseKind::Custom { cov: Matrix::from_row_slice(dim, dim, v) }
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseSpec::None => "none",
            NoiseSpec::Isotropic(_) => "isotropic",
            NoiseSpec::HessianAligned(_) => "hessian_aligned",
            NoiseSpec::Custom(_) => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Valley { noise: NoiseSpec },
    Block { lambdas: Vec<f64>, dim: usize, noise: NoiseSpec },
    Softmax { inputs: usize, features: usize, classes: usize, points: usize, corruption: f64, seed: u64 },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Valley { .. } => "valley",
            ModelSpec::Block { .. } => "block",
            ModelSpec::Softmax { .. } => "softmax",
        }
    }

    pub fn build(&self) -> Result<Box<dyn LossModel<f64>>> {
        Ok(match self {
            ModelSpec::Valley { noise } => Box::new(QuadraticValley::new(noise.kind(2)?)?),
            ModelSpec::Block { lambdas, dim, noise } => Box::new(BlockQuadratic::new(lambdas, *dim, noise.kind(*dim)?)?),
            ModelSpec::Softmax { inputs, features, classes, points, corruption, seed } => {
                Box::new(SoftmaxLabelNoise::generate(*inputs, *features, *classes, *points, *corruption, *seed)?)
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::Valley { .. } => 2,
            ModelSpec::Block { dim, .. } => *dim,
            ModelSpec::Softmax { features, classes, .. } => features * classes,
        }
    }
}

/// Polynomial test function `g(theta) = sum_t c_t prod_i theta_i^{p_ti}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFn {
    pub source: String,
    terms: Vec<(f64, Vec<(usize, u32)>)>,
}

impl TestFn {
    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, factors)| c * factors.iter().map(|&(i, p)| theta[i].powi(p as i32)).product::<f64>())
            .sum()
    }

    /// Largest coordinate index referenced.
    pub fn max_index(&self) -> Option<usize> {
        self.terms.iter().flat_map(|(_, f)| f.iter().map(|&(i, _)| i)).max()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|(_, f)| f.is_empty())
    }
}

impl fmt::Display for TestFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

/// Parses sums of monomials such as `x1`, `x1^2`, `0.5*x0*x1 - 2`.
impl FromStr for TestFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidConfig(format!("bad test function {s:?}: {why}"));
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(bad("empty"));
        }
        let mut terms = Vec::new();
        let mut rest = compact.as_str();
        while !rest.is_empty() {
            let (sign, body) = match rest.as_bytes()[0] {
                b'+' => (1.0, &rest[1..]),
                b'-' => (-1.0, &rest[1..]),
                _ => (1.0, rest),
            };
            let end = body[1..].find(['+', '-']).map(|i| i + 1).unwrap_or(body.len());
            let (term, tail) = body.split_at(end);
            rest = tail;
            let mut coeff = sign;
            let mut factors = Vec::new();
            for factor in term.split('*') {
                if let Some(var) = factor.strip_prefix('x') {
                    let (idx, pow) = match var.split_once('^') {
                        Some((i, p)) => (i, p.parse::<u32>().map_err(|_| bad("power must be a non-negative integer"))?),
                        None => (var, 1),
                    };
                    factors.push((idx.parse::<usize>().map_err(|_| bad("expected x<index>"))?, pow));
                } else {
                    coeff *= factor.parse::<f64>().map_err(|_| bad("expected a number or x<index>[^p]"))?;
                }
            }
            terms.push((coeff, factors));
        }
        Ok(TestFn { source: s.trim().to_string(), terms })
    }
}

/// Settings shared by every experiment; each experiment reads the fields it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub experiment: Experiment,
    pub model: ModelSpec,
    /// Learning-rate grid.
    pub etas: Vec<f64>,
    pub workers: usize,
    pub local_batch: usize,
    /// `alpha = eta * H`; `H = round(alpha / eta)`.
    pub alpha: f64,
    /// Second grid of `alpha` values (closeness alpha scan, drift-ratio `eta H` grid).
    pub alphas: Vec<f64>,
    /// Learning rate of the alpha scan.
    pub alpha_eta: f64,
    pub seeds: usize,
    /// Grouping exponent of the moment experiment.
    pub beta: f64,
    /// Quantile level of high-probability claims.
    pub delta: f64,
    /// Horizon: gradient-flow time `eta * steps` for tracking, slow time `eta^2 * steps` otherwise.
    pub horizon: f64,
    pub theta0: Vec<f64>,
    pub test_fns: Vec<TestFn>,
    pub sde_dt: f64,
    pub kappa: f64,
    /// Recorded time points (weak approximation) or post-burn-in rounds (closeness).
    pub points: usize,
    /// Monte Carlo noise draws for the label-noise check.
    pub mc_samples: usize,
    pub master_seed: u64,
}

/// Minimum seed count for any assertion built on a confidence interval.
pub const MIN_SEEDS: usize = 30;

/// `H = max(1, round(alpha / eta))`.
pub fn local_steps_for(alpha: f64, eta: f64) -> usize {
    ((alpha / eta).round() as usize).max(1)
}

fn fns(list: &[&str]) -> Vec<TestFn> {
    list.iter().map(|s| s.parse().expect("built-in test function")).collect()
}

impl HarnessConfig {
    /// Settings used by the acceptance suite.
    pub fn defaults(experiment: Experiment) -> Self {
        let base = HarnessConfig {
            experiment,
            model: ModelSpec::Valley { noise: NoiseSpec::Isotropic(1.0) },
            etas: vec![0.04, 0.02, 0.01, 0.005],
            workers: 4,
            local_batch: 1,
            alpha: 0.5,
            alphas: vec![],
            alpha_eta: 0.01,
            seeds: 100,
            beta: 0.25,
            delta: 0.9,
            horizon: 2.0,
            theta0: vec![0.0, 1.0],
            test_fns: fns(&["x1"]),
            sde_dt: 1e-3,
            kappa: 2.0,
            points: 20,
            mc_samples: 100_000,
            master_seed: 0,
        };
        match experiment {
            Experiment::Tracking => HarnessConfig { theta0: vec![0.5, 1.0], ..base },
            Experiment::Closeness => HarnessConfig { alphas: vec![0.5, 1.0], points: 50, ..base },
            Experiment::WeakApprox => HarnessConfig {
                etas: vec![0.02, 0.01, 0.005],
                seeds: 200,
                horizon: 1.0,
                test_fns: fns(&["x1", "x1^2"]),
                ..base
            },
            Experiment::Moments => HarnessConfig {
                model: ModelSpec::Block {
                    lambdas: vec![2.0],
                    dim: 3,
                    noise: NoiseSpec::Custom(vec![1.0, 0.3, 0.2, 0.3, 1.5, 0.4, 0.2, 0.4, 0.8]),
                },
                etas: vec![1.0 / 256.0],
                seeds: 10_000,
                theta0: vec![0.0; 3],
                ..base
            },
            Experiment::DriftRatio => HarnessConfig {
                model: ModelSpec::Valley { noise: NoiseSpec::HessianAligned(1.0) },
                etas: vec![0.01],
                workers: 8,
                alphas: vec![20.0, 1.0, 0.01],
                seeds: 64,
                ..base
            },
            Experiment::Lsr => HarnessConfig {
                model: ModelSpec::Valley { noise: NoiseSpec::Custom(vec![1.0, 0.3, 0.3, 0.5]) },
                etas: vec![0.1],
                alpha: 0.4,
                seeds: 200,
                horizon: 1.0,
                ..base
            },
            Experiment::LabelNoise => HarnessConfig {
                model: ModelSpec::Softmax { inputs: 4, features: 5, classes: 3, points: 5, corruption: 0.2, seed: 1 },
                etas: vec![0.5],
                seeds: 0,
                theta0: vec![],
                ..base
            },
        }
    }

    /// Whether this configuration's assertions rest on seed-level confidence intervals.
    pub fn uses_seed_statistics(&self) -> bool {
        match self.experiment {
            Experiment::LabelNoise => false,
            Experiment::Lsr => self.seeds > 0,
            _ => true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.uses_seed_statistics() && self.seeds < MIN_SEEDS {
            return bad(format!("{} needs at least {MIN_SEEDS} seeds, got {}", self.experiment, self.seeds));
        }
        if self.etas.is_empty() || self.etas.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return bad("etas must be a non-empty list of positive numbers".into());
        }
        if self.workers == 0 || self.local_batch == 0 {
            return bad("K and B_loc must be >= 1".into());
        }
        for (name, v) in [("alpha", self.alpha), ("alpha_eta", self.alpha_eta), ("sde_dt", self.sde_dt), ("kappa", self.kappa)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.alphas.iter().any(|a| !(*a > 0.0)) {
            return bad("alphas must be positive".into());
        }
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return bad(format!("beta must lie in (0, 0.5), got {}", self.beta));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        let d = self.model.dim();
        if !self.theta0.is_empty() && self.theta0.len() != d {
            return bad(format!("theta0 has {} entries but the model has d = {d}", self.theta0.len()));
        }
        if let Some(i) = self.test_fns.iter().filter_map(TestFn::max_index).max() {
            if i >= d {
                return bad(format!("test function refers to x{i} but the model has d = {d}"));
            }
        }
        if matches!(self.experiment, Experiment::Closeness) && self.alphas.len() < 2 {
            return bad("closeness needs at least two alphas".into());
        }
        if matches!(self.experiment, Experiment::WeakApprox | Experiment::Closeness) && self.points == 0 {
            return bad("points must be >= 1".into());
        }
        if matches!(self.experiment, Experiment::WeakApprox | Experiment::Lsr) && self.test_fns.is_empty() {
            return bad("at least one test function is required".into());
        }
        Ok(())
    }

    /// Initial point, falling back to the origin.
    pub fn theta0(&self) -> Vec<f64> {
        if self.theta0.is_empty() {
            vec![0.0; self.model.dim()]
        } else {
            self.theta0.clone()
        }
    }
}
