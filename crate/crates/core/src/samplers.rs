//! Distributed minibatch samplers.
//!
//! Indices are 0-based. The with-replacement sampler draws from the caller's
//! stream; the without-replacement sampler deals shards of a permutation that
//! all workers share for one epoch.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::rng::{domain, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerKind {
    #[default]
    WithReplacement,
    WithoutReplacement,
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerKind::WithReplacement => "with",
            SamplerKind::WithoutReplacement => "without",
        })
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with" => Ok(SamplerKind::WithReplacement),
            "without" => Ok(SamplerKind::WithoutReplacement),
            other => Err(Error::InvalidConfig(format!("sampler must be \"with\" or \"without\", got {other:?}"))),
        }
    }
}

/// Per-draw transform applied to every issued index (identity when absent).
pub type Augment = fn(usize, &mut dyn RngCore) -> usize;

#[derive(Debug, Clone)]
struct WorkerCursor {
    epoch: u64,
    batch: usize,
}

/// Sampler state for `K` workers drawing local batches of size `B_loc` from `N` data.
#[derive(Debug, Clone)]
pub struct SamplerState {
    kind: SamplerKind,
    n: usize,
    workers: usize,
    local_batch: usize,
    seed: u64,
    cursors: Vec<WorkerCursor>,
    // Permutations of live epochs, oldest first.
    perms: VecDeque<(u64, Vec<usize>)>,
    augment: Option<Augment>,
}

impl SamplerState {
    pub fn new(kind: SamplerKind, n: usize, workers: usize, local_batch: usize, seed: u64) -> Result<Self> {
        if n == 0 || workers == 0 || local_batch == 0 {
            return Err(Error::InvalidConfig(format!(
                "sampler needs N, K, B_loc >= 1 (got N = {n}, K = {workers}, B_loc = {local_batch})"
            )));
        }
        if kind == SamplerKind::WithoutReplacement && n / (workers * local_batch) == 0 {
            return Err(Error::InvalidConfig(format!(
                "sampling without replacement needs N >= K * B_loc (N = {n}, K = {workers}, B_loc = {local_batch})"
            )));
        }
        Ok(SamplerState {
            kind,
            n,
            workers,
            local_batch,
            seed,
            cursors: vec![WorkerCursor { epoch: 0, batch: 0 }; workers],
            perms: VecDeque::new(),
            augment: None,
        })
    }

    pub fn with_augment(mut self, augment: Augment) -> Self {
        self.augment = Some(augment);
        self
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    /// `N_loc = floor(N / (K * B_loc))`, batches per worker per epoch.
    pub fn batches_per_epoch(&self) -> usize {
        self.n / (self.workers * self.local_batch)
    }

    /// Epoch that worker `k` is currently drawing from.
    pub fn epoch_of(&self, worker: usize) -> u64 {
        self.cursors[worker].epoch
    }

    /// Next local batch for `worker` (0-based).
    pub fn next_batch(&mut self, worker: usize, rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        if worker >= self.workers {
            return Err(Error::InvalidConfig(format!("worker {worker} out of range (K = {})", self.workers)));
        }
        let mut batch = match self.kind {
            SamplerKind::WithReplacement => self.sample_with_replacement(rng),
            SamplerKind::WithoutReplacement => self.sample_without_replacement(worker)?,
        };
        if let Some(aug) = self.augment {
            for i in batch.iter_mut() {
                *i = aug(*i, rng);
            }
        }
        Ok(batch)
    }

    fn sample_with_replacement(&self, rng: &mut dyn RngCore) -> Vec<usize> {
        (0..self.local_batch).map(|_| rng.random_range(0..self.n)).collect()
    }

    fn sample_without_replacement(&mut self, worker: usize) -> Result<Vec<usize>> {
        let n_loc = self.batches_per_epoch();
        let mut cur = self.cursors[worker].clone();
        if cur.batch == n_loc {
            cur = WorkerCursor { epoch: cur.epoch + 1, batch: 0 };
        }
        let oldest = self.cursors.iter().map(|c| if c.batch == n_loc { c.epoch + 1 } else { c.epoch }).min().unwrap_or(0);
        if cur.epoch > oldest + 1 {
            return Err(Error::SamplerSkew { worker, requested: cur.epoch, oldest });
        }
        let b = self.local_batch;
        let start = (worker * n_loc + cur.batch) * b;
        let batch = self.permutation(cur.epoch)[start..start + b].to_vec();
        cur.batch += 1;
        self.cursors[worker] = cur;
        self.retire_epochs();
        Ok(batch)
    }

    fn permutation(&mut self, epoch: u64) -> &[usize] {
        if !self.perms.iter().any(|(e, _)| *e == epoch) {
            let mut p: Vec<usize> = (0..self.n).collect();
            p.shuffle(&mut stream(self.seed, &[domain::EPOCH, epoch]));
            self.perms.push_back((epoch, p));
        }
        &self.perms.iter().find(|(e, _)| *e == epoch).expect("just inserted").1
    }

    fn retire_epochs(&mut self) {
        let min_epoch = self.cursors.iter().map(|c| c.epoch).min().unwrap_or(0);
        while self.perms.front().is_some_and(|(e, _)| *e < min_epoch) {
            self.perms.pop_front();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn run_epoch(s: &mut SamplerState, k: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut rng = stream(0, &[]);
        for _ in 0..s.batches_per_epoch() {
            for w in 0..k {
                out.extend(s.next_batch(w, &mut rng).unwrap());
            }
        }
        out
    }

    #[test]
    fn single_datum_with_replacement() {
        let mut s = SamplerState::new(SamplerKind::WithReplacement, 1, 1, 3, 0).unwrap();
        assert_eq!(s.next_batch(0, &mut stream(1, &[])).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn workers_get_different_batches() {
        let mut s = SamplerState::new(SamplerKind::WithReplacement, 1000, 2, 4, 0).unwrap();
        let a = s.next_batch(0, &mut stream(5, &[0, 0])).unwrap();
        let b = s.next_batch(1, &mut stream(5, &[0, 1])).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn with_replacement_frequencies() {
        let mut s = SamplerState::new(SamplerKind::WithReplacement, 10, 1, 2, 0).unwrap();
        let mut rng = stream(9, &[]);
        let mut counts = [0usize; 10];
        let draws = 100_000;
        for _ in 0..draws / 2 {
            for i in s.next_batch(0, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        let sd = (draws as f64 * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * 0.1).abs() < 3.5 * sd, "count {c}");
        }
    }

    #[test]
    fn drops_remainder() {
        let mut s = SamplerState::new(SamplerKind::WithoutReplacement, 10, 2, 2, 3).unwrap();
        assert_eq!(s.batches_per_epoch(), 2);
        let issued = run_epoch(&mut s, 2);
        assert_eq!(issued.len(), 8);
        assert_eq!(issued.iter().collect::<HashSet<_>>().len(), 8);
    }

    #[test]
    fn one_batch_per_epoch() {
        let mut s = SamplerState::new(SamplerKind::WithoutReplacement, 4, 2, 2, 3).unwrap();
        assert_eq!(s.batches_per_epoch(), 1);
        let e0 = run_epoch(&mut s, 2);
        let e1 = run_epoch(&mut s, 2);
        let mut a = e0.clone();
        let mut b = e1.clone();
        a.sort();
        b.sort();
        assert_eq!(a, vec![0, 1, 2, 3]);
        assert_eq!(b, vec![0, 1, 2, 3]);
    }

    #[test]
    fn permutation_changes_across_epochs() {
        let mut s = SamplerState::new(SamplerKind::WithoutReplacement, 6, 1, 6, 1).unwrap();
        let first = run_epoch(&mut s, 1);
        let changed = (0..20).any(|_| run_epoch(&mut s, 1) != first);
        assert!(changed);
    }

    #[test]
    fn skew_beyond_one_epoch_is_rejected() {
        let mut s = SamplerState::new(SamplerKind::WithoutReplacement, 4, 2, 2, 0).unwrap();
        let mut rng = stream(0, &[]);
        s.next_batch(0, &mut rng).unwrap();
        s.next_batch(0, &mut rng).unwrap();
        let err = s.next_batch(0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::SamplerSkew { worker: 0, .. }));
        s.next_batch(1, &mut rng).unwrap();
        s.next_batch(0, &mut rng).unwrap();
    }

    #[test]
    fn rejects_too_small_dataset() {
        assert!(SamplerState::new(SamplerKind::WithoutReplacement, 3, 2, 2, 0).is_err());
        assert!(SamplerState::new(SamplerKind::WithReplacement, 0, 1, 1, 0).is_err());
    }

    #[test]
    fn parses_kind() {
        assert_eq!("with".parse::<SamplerKind>().unwrap(), SamplerKind::WithReplacement);
        assert_eq!("without".parse::<SamplerKind>().unwrap(), SamplerKind::WithoutReplacement);
        assert!("both".parse::<SamplerKind>().is_err());
    }

    proptest! {
        #[test]
        fn epochs_partition_without_duplicates(n in 4usize..60, k in 1usize..4, b in 1usize..4, seed: u64) {
            prop_assume!(n >= k * b);
            let mut s = SamplerState::new(SamplerKind::WithoutReplacement, n, k, b, seed).unwrap();
            for _ in 0..3 {
                let issued = run_epoch(&mut s, k);
                prop_assert_eq!(issued.len(), k * b * (n / (k * b)));
                prop_assert_eq!(issued.iter().collect::<HashSet<_>>().len(), issued.len());
                prop_assert!(issued.iter().all(|&i| i < n));
            }
        }

        #[test]
        fn deterministic_given_seed(seed: u64) {
            let mut a = SamplerState::new(SamplerKind::WithoutReplacement, 12, 2, 3, seed).unwrap();
            let mut b = a.clone();
            prop_assert_eq!(run_epoch(&mut a, 2), run_epoch(&mut b, 2));
        }
    }
}
