//! Local SGD dynamics near minimizer manifolds.
//!
//! The crate runs parallel, local and post-local SGD on toy loss landscapes,
//! computes the geometry of their minimizer manifolds and integrates the
//! slow SDEs that describe the long-horizon behaviour of the iterates.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix the usual double-precision choice.

// Negated comparisons below reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod manifold;
pub mod models;
pub mod numerics;
pub mod optim;
pub mod rng;
pub mod samplers;
pub mod scalar;
pub mod slowsde;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use scalar::Real;

pub type Vector64 = Vector<f64>;
pub type Matrix64 = Matrix<f64>;
pub type QuadraticValley64 = models::QuadraticValley<f64>;
pub type BlockQuadratic64 = models::BlockQuadratic<f64>;
pub type SoftmaxLabelNoise64 = models::SoftmaxLabelNoise<f64>;
pub type RunConfig64 = optim::RunConfig<f64>;
pub type TrajectoryRecord64 = optim::TrajectoryRecord<f64>;
pub type ManifoldFrame64 = manifold::ManifoldFrame<f64>;
pub type SdeKind64 = slowsde::SdeKind<f64>;
