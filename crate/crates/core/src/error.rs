use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    EigenNoConvergence { sweeps: usize, off_norm: f64 },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("function undefined at eigenvalue {eigenvalue}")]
    UndefinedAtEigenvalue { eigenvalue: f64 },

    #[error("non-convergent flow after {steps} steps (t = {time})")]
    NonConvergentFlow { steps: usize, time: f64 },

    #[error("point is off the minimizer manifold: |grad L| = {grad_norm:e}")]
    OffManifold { grad_norm: f64 },

    #[error("Hessian eigenvalue {eigenvalue:e} lies within the rank-ambiguity band around threshold {threshold:e}; choose a different rank threshold")]
    RankAmbiguous { eigenvalue: f64, threshold: f64 },

    #[error("Hessian has negative eigenvalue {eigenvalue:e}: point is not a minimizer")]
    NotMinimizer { eigenvalue: f64 },

    #[error("sampler out of lockstep: worker {worker} requested epoch {requested} while epoch {oldest} is unfinished")]
    SamplerSkew { worker: usize, requested: u64, oldest: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("linear scaling rule with kappa = {kappa} gives non-integral {what}; nearest admissible kappa is {suggestion}")]
    LsrNotIntegral { kappa: f64, what: &'static str, suggestion: f64 },

    #[error("slow SDE left the manifold basin at t = {time} (state {state:?})")]
    LeftBasin { time: f64, state: Vec<f64> },
}

pub type Result<T> = std::result::Result<T, Error>;
