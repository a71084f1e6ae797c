//! Special functions, symmetric eigendecomposition and ODE integration.

mod eig;
mod ode;
mod special;

pub use eig::{default_rank_threshold, matrix_fn, psd_sqrt, sym_eig, sym_eig_default, SymEig};
pub use ode::{integrate_ode, OdeOptions, OdeSolution, StopRule};
pub use special::{adaptive_gk15, big_f, psi};
pub(crate) use special::psi_unchecked;
