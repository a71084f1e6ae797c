//! Command-line front end: configuration files, experiment dispatch, CSV and SVG output.

// Negated comparisons below reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod config;
pub mod emit;
pub mod svg;

pub use app::{run, Cli, Command};
