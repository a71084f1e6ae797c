//! Order-independent summary statistics, least-squares fits and bootstrap intervals.

use rand::Rng;
use slowsde_core::rng::{domain, stream};

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn std_err(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Linear-interpolation quantile of the sorted sample (`p` in `[0, 1]`).
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Ordinary least squares `y = a + b x`; returns `(b, a)`.
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let mx = mean(xs);
    let my = mean(ys);
    let sxy: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let sxx: Vec<f64> = xs.iter().map(|x| (x - mx) * (x - mx)).collect();
    let b = pairwise_sum(&sxy) / pairwise_sum(&sxx);
    (b, my - b * mx)
}

/// Slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    ols(&lx, &ly).0
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Resampling indices `0..n` with replacement.
pub fn resample_indices<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Percentile bootstrap interval (2.5%, 97.5%) of a log-log slope.
///
/// `stat(cell, rng)` recomputes the statistic of cell `cell` on a resample
/// drawn from `rng`; cells are resampled independently.
pub fn bootstrap_slope_ci(
    xs: &[f64],
    seed: u64,
    resamples: usize,
    mut stat: impl FnMut(usize, &mut slowsde_core::rng::StreamRng) -> f64,
) -> (f64, f64) {
    let mut slopes = Vec::with_capacity(resamples);
    for r in 0..resamples {
        let ys: Vec<f64> = (0..xs.len())
            .map(|c| stat(c, &mut stream(seed, &[domain::HARNESS, 0xb007, r as u64, c as u64])))
            .collect();
        let s = log_log_slope(xs, &ys);
        if s.is_finite() {
            slopes.push(s);
        }
    }
    (quantile(&slopes, 0.025), quantile(&slopes, 0.975))
}

/// Picks `xs[idx]` for each index.
pub fn pick(xs: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| xs[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn basic_moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert_abs_diff_eq!(variance(&xs), 5.0 / 3.0, epsilon = 1e-15);
        assert_eq!(median(&xs), 2.5);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_eq!(quantile(&xs, 0.0), 1.0);
    }

    #[test]
    fn exact_power_law_slope() {
        let xs = [0.04, 0.02, 0.01, 0.005];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.sqrt()).collect();
        assert_abs_diff_eq!(log_log_slope(&xs, &ys), 0.5, epsilon = 1e-12);
        let (lo, hi) = bootstrap_slope_ci(&xs, 1, 50, |c, _| ys[c]);
        assert_abs_diff_eq!(lo, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.5, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn pairwise_sum_matches_naive(xs in prop::collection::vec(-1e3f64..1e3, 0..200)) {
            let naive: f64 = xs.iter().sum();
            prop_assert!((pairwise_sum(&xs) - naive).abs() <= 1e-9 * (1.0 + xs.iter().map(|x| x.abs()).sum::<f64>()));
        }

        #[test]
        fn quantile_is_monotone(xs in prop::collection::vec(-10.0f64..10.0, 1..50), p in 0.0f64..1.0, q in 0.0f64..1.0) {
            prop_assume!(p <= q);
            prop_assert!(quantile(&xs, p) <= quantile(&xs, q));
        }
    }
}
