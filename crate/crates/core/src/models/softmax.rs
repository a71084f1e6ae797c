use rand::{Rng, RngCore};

use super::LossModel;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::{domain, standard_normal, stream};
use crate::scalar::Real;

/// Largest parameter count accepted.
pub const MAX_PARAMS: usize = 64;

/// Linear softmax classifier on fixed `tanh` features, trained with label noise.
///
/// Each access to datum `i` replaces its label with a uniformly random class
/// with probability `corruption`, so the expected one-hot target is
/// `q_i = (1 - p) e_{y_i} + (p / C) 1`. Parameters are the `C x F` weight
/// matrix, stored row-major. With at least as many features as points the
/// model can interpolate every `q_i`, and on that set the noise covariance
/// equals the Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxLabelNoise<T> {
    classes: usize,
    features: Vec<Vec<T>>,
    labels: Vec<usize>,
    corruption: T,
    targets: Vec<Vec<T>>,
}

impl<T: Real> SoftmaxLabelNoise<T> {
    /// Random toy dataset: `points` Gaussian inputs in `R^inputs`, labels `i mod C`,
    /// features `tanh(A x + b)` with `n_features` random units.
    pub fn generate(
        inputs: usize,
        n_features: usize,
        classes: usize,
        points: usize,
        corruption: T,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = stream(seed, &[domain::MODEL]);
        let a: Vec<Vec<f64>> = (0..n_features)
            .map(|_| (0..inputs).map(|_| standard_normal::<f64, _>(&mut rng) / (inputs as f64).sqrt()).collect())
            .collect();
        let b: Vec<f64> = (0..n_features).map(|_| 0.5 * standard_normal::<f64, _>(&mut rng)).collect();
        let mut feats = Vec::with_capacity(points);
        for _ in 0..points {
            let x: Vec<f64> = (0..inputs).map(|_| standard_normal(&mut rng)).collect();
            let phi = a
                .iter()
                .zip(&b)
                .map(|(row, bi)| T::lit((row.iter().zip(&x).map(|(w, xi)| w * xi).sum::<f64>() + bi).tanh()))
                .collect();
            feats.push(phi);
        }
        let labels = (0..points).map(|i| i % classes.max(1)).collect();
        Self::from_features(feats, labels, classes, corruption)
    }

    pub fn from_features(features: Vec<Vec<T>>, labels: Vec<usize>, classes: usize, corruption: T) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidConfig("softmax model needs at least 2 classes".into()));
        }
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::InvalidConfig("softmax model needs one label per feature row".into()));
        }
        let f = features[0].len();
        if f == 0 || features.iter().any(|r| r.len() != f) {
            return Err(Error::InvalidConfig("feature rows must share a positive length".into()));
        }
        if classes * f > MAX_PARAMS {
            return Err(Error::InvalidConfig(format!("softmax model has {} parameters (max {MAX_PARAMS})", classes * f)));
        }
        if labels.iter().any(|&y| y >= classes) {
            return Err(Error::InvalidConfig("label out of range".into()));
        }
        if !(corruption > T::zero() && corruption < T::one()) {
            return Err(Error::InvalidConfig(format!("corruption probability must lie in (0, 1), got {corruption}")));
        }
        let spread = corruption / T::from_count(classes);
        let targets = labels
            .iter()
            .map(|&y| {
                let mut q = vec![spread; classes];
                q[y] += T::one() - corruption;
                q
            })
            .collect();
        Ok(SoftmaxLabelNoise { classes, features, labels, corruption, targets })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn n_features(&self) -> usize {
        self.features[0].len()
    }

    pub fn points(&self) -> usize {
        self.features.len()
    }

    /// Expected label distribution of datum `i`.
    pub fn target(&self, i: usize) -> &[T] {
        &self.targets[i]
    }

    fn logits(&self, th: &[T], i: usize) -> Vec<T> {
        let f = self.n_features();
        let phi = &self.features[i];
        (0..self.classes)
            .map(|c| th[c * f..(c + 1) * f].iter().zip(phi).map(|(&w, &p)| w * p).sum())
            .collect()
    }

    /// Class probabilities at datum `i`.
    pub fn probs(&self, th: &[T], i: usize) -> Vec<T> {
        let z = self.logits(th, i);
        let zmax = z.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let e: Vec<T> = z.iter().map(|&v| (v - zmax).exp()).collect();
        let s: T = e.iter().copied().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    /// Gradient of the loss of datum `i` against a target distribution.
    fn sample_grad(&self, th: &[T], i: usize, target: &[T]) -> Vector<T> {
        let p = self.probs(th, i);
        let f = self.n_features();
        let mut g = Vector::zeros(self.classes * f);
        for c in 0..self.classes {
            let r = p[c] - target[c];
            for (k, &phi) in self.features[i].iter().enumerate() {
                g[c * f + k] = r * phi;
            }
        }
        g
    }

    fn draw_label(&self, i: usize, rng: &mut dyn RngCore) -> usize {
        if rng.random::<f64>() < self.corruption.to_f64_lossy() {
            rng.random_range(0..self.classes)
        } else {
            self.labels[i]
        }
    }

    fn draw_noise(&self, th: &[T], i: usize, mean: &Vector<T>, rng: &mut dyn RngCore) -> Vector<T> {
        let y = self.draw_label(i, rng);
        let mut onehot = vec![T::zero(); self.classes];
        onehot[y] = T::one();
        self.sample_grad(th, i, &onehot).sub(mean)
    }
}

impl<T: Real> LossModel<T> for SoftmaxLabelNoise<T> {
    fn dim(&self) -> usize {
        self.classes * self.n_features()
    }

    fn loss(&self, th: &[T]) -> T {
        let mut total = T::zero();
        for i in 0..self.points() {
            let z = self.logits(th, i);
            let zmax = z.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let lse = zmax + z.iter().map(|&v| (v - zmax).exp()).sum::<T>().ln();
            total += self.targets[i].iter().zip(&z).map(|(&q, &zc)| q * (lse - zc)).sum::<T>();
        }
        total / T::from_count(self.points())
    }

    fn grad(&self, th: &[T]) -> Vector<T> {
        let mut g = Vector::zeros(self.dim());
        for i in 0..self.points() {
            g.axpy(T::one(), &self.sample_grad(th, i, &self.targets[i]));
        }
        g.scale(T::one() / T::from_count(self.points()))
    }

    fn hessian(&self, th: &[T]) -> Matrix<T> {
        let f = self.n_features();
        let d = self.dim();
        let mut h = Matrix::zeros(d, d);
        let inv_n = T::one() / T::from_count(self.points());
        for i in 0..self.points() {
            let p = self.probs(th, i);
            let phi = &self.features[i];
            for a in 0..self.classes {
                for b in 0..self.classes {
                    let s = if a == b { p[a] - p[a] * p[b] } else { -p[a] * p[b] };
                    for k in 0..f {
                        for l in 0..f {
                            h[(a * f + k, b * f + l)] += inv_n * s * phi[k] * phi[l];
                        }
                    }
                }
            }
        }
        h
    }

    fn third_contract(&self, th: &[T], m: &Matrix<T>) -> Vector<T> {
        // Logit-space third derivative of log-sum-exp:
        // T_abc = delta_ab S_ac - S_ac p_b - p_a S_bc, with S_ac = p_a (delta_ac - p_c).
        let f = self.n_features();
        let c = self.classes;
        let inv_n = T::one() / T::from_count(self.points());
        let mut out = Vector::zeros(self.dim());
        for i in 0..self.points() {
            let p = self.probs(th, i);
            let phi = &self.features[i];
            let mut mz = vec![T::zero(); c * c];
            for a in 0..c {
                for b in 0..c {
                    let mut s = T::zero();
                    for k in 0..f {
                        for l in 0..f {
                            s += m[(a * f + k, b * f + l)] * phi[k] * phi[l];
                        }
                    }
                    mz[a * c + b] = s;
                }
            }
            let sm = |a: usize, b: usize| if a == b { p[a] * (T::one() - p[a]) } else { -p[a] * p[b] };
            let mut total_smp = T::zero();
            for a in 0..c {
                for b in 0..c {
                    total_smp += sm(a, b) * mz[a * c + b];
                }
            }
            for a in 0..c {
                let mut v = T::zero();
                for cc in 0..c {
                    v += sm(a, cc) * mz[a * c + cc];
                    let pm: T = (0..c).map(|b| p[b] * mz[b * c + cc]).sum();
                    v -= sm(a, cc) * pm;
                }
                v -= p[a] * total_smp;
                for k in 0..f {
                    out[a * f + k] += inv_n * v * phi[k];
                }
            }
        }
        out
    }

    fn noise_covariance(&self, th: &[T]) -> Matrix<T> {
        let f = self.n_features();
        let d = self.dim();
        let n = self.points();
        let inv_n = T::one() / T::from_count(n);
        let mean = self.grad(th);
        let mut cov = Matrix::outer(&mean, &mean).scale(-T::one());
        for i in 0..n {
            let gi = self.sample_grad(th, i, &self.targets[i]);
            let q = &self.targets[i];
            let phi = &self.features[i];
            for r in 0..d {
                for s in 0..d {
                    let (a, k) = (r / f, r % f);
                    let (b, l) = (s / f, s % f);
                    let lab = if a == b { q[a] - q[a] * q[b] } else { -q[a] * q[b] };
                    cov[(r, s)] += inv_n * (gi[r] * gi[s] + lab * phi[k] * phi[l]);
                }
            }
        }
        cov.symmetrize()
    }

    fn sample_noise_sum(&self, th: &[T], count: usize, rng: &mut dyn RngCore) -> Vector<T> {
        let mean = self.grad(th);
        let mut sum = Vector::zeros(self.dim());
        for _ in 0..count {
            let i = rng.random_range(0..self.points());
            sum.axpy(T::one(), &self.draw_noise(th, i, &mean, rng));
        }
        sum
    }

    fn sample_noise_at(&self, th: &[T], index: usize, rng: &mut dyn RngCore) -> Vector<T> {
        let mean = self.grad(th);
        self.draw_noise(th, index, &mean, rng)
    }

    fn noise_bound(&self) -> T {
        // |p - e_y| <= sqrt(2) for the sample and for the mean.
        let fmax = self
            .features
            .iter()
            .map(|r| Vector(r.clone()).norm())
            .fold(T::zero(), |a, b| a.max(b));
        T::lit(2.0 * 2f64.sqrt()) * fmax
    }

    fn is_noiseless(&self) -> bool {
        false
    }

    fn dataset_size(&self) -> Option<usize> {
        Some(self.points())
    }

    fn min_loss(&self) -> Option<T> {
        let n = T::from_count(self.points());
        let entropy: T = self
            .targets
            .iter()
            .map(|q| q.iter().map(|&v| -v * v.ln()).sum::<T>())
            .sum();
        Some(entropy / n)
    }

    fn name(&self) -> &'static str {
        "softmax"
    }
}
