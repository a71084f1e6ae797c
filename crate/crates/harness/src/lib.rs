//! Monte Carlo experiments that check slow-SDE predictions against the optimizers.
//!
//! Each experiment takes a [`HarnessConfig`] and returns a [`Report`] holding
//! summary statistics, fitted exponents with bootstrap intervals, raw samples
//! and pass/fail assertions. Seeds run in parallel; every random stream is
//! derived from the master seed, so reports do not depend on the thread count.

// Negated comparisons below reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod config;
pub mod experiments;
pub mod par;
pub mod report;
pub mod stats;

pub use config::{Experiment, HarnessConfig, ModelSpec, NoiseSpec, TestFn};
pub use experiments::run_experiment;
pub use report::{Assertion, Report};
