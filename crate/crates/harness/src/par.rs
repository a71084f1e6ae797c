//! Seed-parallel execution.
//!
//! Results are collected in seed order, and every reduction downstream is a
//! sequential pairwise sum over that order, so statistics do not depend on
//! the number of threads.

use rayon::prelude::*;
use slowsde_core::{Error, Result};

/// `f(0..n)` evaluated in parallel, returned in index order.
pub fn par_map<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    (0..n).into_par_iter().map(f).collect()
}

/// Fallible [`par_map`]; the first error in index order wins.
pub fn try_par_map<R: Send>(n: usize, f: impl Fn(usize) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    par_map(n, f).into_iter().collect()
}

/// Runs `f` on a dedicated pool of `threads` workers (`None`: machine parallelism).
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidConfig("--threads must be >= 1".into()));
        }
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}
