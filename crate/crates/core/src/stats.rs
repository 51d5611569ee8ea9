//! Monte Carlo plumbing: reproducible batched random streams, streaming
//! moment accumulators and estimate records.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Batch `b` of a run with seed `s` draws from `ChaCha20Rng::seed_from_u64(s)`
/// moved to stream `b`.
pub const RNG_ALGORITHM: &str = "chacha20/seed_from_u64/stream-per-batch";
pub const DEFAULT_BATCH: usize = 4096;

pub fn batch_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Circular complex Gaussian with `E|z|² = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    Complex64::new(s * x, s * y)
}

/// Runs `n_samples` draws in batches of `batch` on independent streams and
/// returns the per-batch results in batch order.
pub fn run_batches<T, F>(n_samples: usize, batch: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha20Rng, usize) -> T + Sync,
{
    if n_samples == 0 {
        return invalid("Monte Carlo needs at least one sample");
    }
    let batch = batch.max(1);
    let n_batches = n_samples.div_ceil(batch);
    Ok((0..n_batches)
        .into_par_iter()
        .map(|b| {
            let count = batch.min(n_samples - b * batch);
            let mut rng = batch_rng(seed, b as u64);
            f(&mut rng, count)
        })
        .collect())
}

/// Welford running mean and variance for a vector of observables.
#[derive(Debug, Clone)]
pub struct Welford {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(width: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; width],
            m2: vec![0.0; width],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> Vec<f64> {
        let d = (self.n.max(2) - 1) as f64;
        self.m2.iter().map(|s| s / d).collect()
    }

    pub fn stderr(&self) -> Vec<f64> {
        let n = self.n.max(1) as f64;
        self.variance().iter().map(|v| (v / n).sqrt()).collect()
    }

    pub fn merged(parts: Vec<Self>, width: usize) -> Self {
        let mut acc = Self::new(width);
        for p in &parts {
            acc.merge(p);
        }
        acc
    }
}

/// Sums for the self-normalized estimator `Σ w X / Σ w`, one ratio per
/// component of `X`, with delta-method standard errors.
#[derive(Debug, Clone)]
pub struct RatioAccumulator {
    n: u64,
    pub(crate) sw: f64,
    pub(crate) sw2: f64,
    pub(crate) swx: Vec<f64>,
    pub(crate) sw2x: Vec<f64>,
    pub(crate) sw2x2: Vec<f64>,
}

impl RatioAccumulator {
    pub fn new(width: usize) -> Self {
        Self {
            n: 0,
            sw: 0.0,
            sw2: 0.0,
            swx: vec![0.0; width],
            sw2x: vec![0.0; width],
            sw2x2: vec![0.0; width],
        }
    }

    pub fn push(&mut self, w: f64, x: &[f64]) {
        self.n += 1;
        self.sw += w;
        self.sw2 += w * w;
        for (i, &v) in x.iter().enumerate() {
            self.swx[i] += w * v;
            self.sw2x[i] += w * w * v;
            self.sw2x2[i] += w * w * v * v;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.sw += other.sw;
        self.sw2 += other.sw2;
        for i in 0..self.swx.len() {
            self.swx[i] += other.swx[i];
            self.sw2x[i] += other.sw2x[i];
            self.sw2x2[i] += other.sw2x2[i];
        }
    }

    pub fn merged(parts: Vec<Self>, width: usize) -> Self {
        let mut acc = Self::new(width);
        for p in &parts {
            acc.merge(p);
        }
        acc
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn weight_sum(&self) -> f64 {
        self.sw
    }

    /// Kish effective sample size `(Σw)²/Σw²`.
    pub fn effective_sample_size(&self) -> f64 {
        if self.sw2 == 0.0 {
            0.0
        } else {
            self.sw * self.sw / self.sw2
        }
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.swx.iter().map(|s| s / self.sw).collect()
    }

    pub fn stderrs(&self) -> Vec<f64> {
        let sw = self.sw;
        self.ratios()
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let v = (self.sw2x2[i] - 2.0 * r * self.sw2x[i] + r * r * self.sw2) / (sw * sw);
                v.max(0.0).sqrt()
            })
            .collect()
    }

    /// Plain mean of the weights `Σw / n` and its standard error.
    pub fn weight_mean(&self) -> (f64, f64) {
        let n = self.n as f64;
        let mean = self.sw / n;
        let var = ((self.sw2 - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

/// One scalar Monte Carlo estimate with everything needed to reproduce it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub rng: String,
}

impl McEstimate {
    pub fn new(value: f64, stderr: f64, n_samples: u64, seed: u64) -> Self {
        Self {
            value,
            stderr,
            n_samples,
            seed,
            rng: RNG_ALGORITHM.to_string(),
        }
    }

    pub fn exact(value: f64) -> Self {
        Self::new(value, 0.0, 0, 0)
    }

    /// `|self - x| ≤ sigmas · stderr` (plus a rounding floor).
    pub fn agrees_with(&self, x: f64, sigmas: f64) -> bool {
        (self.value - x).abs() <= sigmas * self.stderr + 1e-12 * (1.0 + x.abs())
    }

    /// Agreement of two independent estimates within `sigmas` joint stderr.
    pub fn agrees_with_estimate(&self, other: &McEstimate, sigmas: f64) -> bool {
        let joint = self.stderr.hypot(other.stderr);
        (self.value - other.value).abs() <= sigmas * joint + 1e-12 * (1.0 + self.value.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_merge_matches_direct() {
        let data: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1 + 1e8).collect();
        let mut all = Welford::new(1);
        data.iter().for_each(|&x| all.push(&[x]));
        let mut a = Welford::new(1);
        let mut b = Welford::new(1);
        data[..300].iter().for_each(|&x| a.push(&[x]));
        data[300..].iter().for_each(|&x| b.push(&[x]));
        a.merge(&b);
        let mean = data.iter().sum::<f64>() / 1000.0;
        let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0;
        assert!((all.mean()[0] - mean).abs() < 1e-6);
        assert!((all.variance()[0] / var - 1.0).abs() < 1e-9);
        assert!((a.variance()[0] / var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn batches_are_reproducible_and_ordered() {
        let draw = |seed| {
            run_batches(10_000, 1000, seed, |rng, n| (0..n).map(|_| rng.random::<u32>()).collect::<Vec<_>>())
                .unwrap()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
        let parts = draw(3);
        assert_eq!(parts.len(), 10);
        assert_ne!(parts[0], parts[1]);
        assert!(run_batches(0, 10, 1, |_, _| ()).is_err());
    }

    #[test]
    fn complex_gaussian_moments() {
        let parts = run_batches(200_000, DEFAULT_BATCH, 9, |rng, n| {
            let mut w = Welford::new(3);
            for _ in 0..n {
                let z = complex_gaussian(rng, 2.5);
                w.push(&[z.norm_sqr(), z.re, (z * z).re]);
            }
            w
        })
        .unwrap();
        let w = Welford::merged(parts, 3);
        let (m, s) = (w.mean(), w.stderr());
        assert!((m[0] - 2.5).abs() < 4.0 * s[0]);
        assert!(m[1].abs() < 4.0 * s[1]);
        assert!(m[2].abs() < 4.0 * s[2]);
    }

    #[test]
    fn ratio_estimator_with_constant_weights() {
        let mut r = RatioAccumulator::new(1);
        for i in 0..100 {
            r.push(1.0, &[i as f64]);
        }
        assert!((r.ratios()[0] - 49.5).abs() < 1e-12);
        assert!((r.effective_sample_size() - 100.0).abs() < 1e-12);
        // with unit weights the delta-method error is the population sd / sqrt(n)
        let pop_var = (0..100).map(|i| (i as f64 - 49.5).powi(2)).sum::<f64>() / 100.0;
        assert!((r.stderrs()[0] - (pop_var / 100.0).sqrt()).abs() < 1e-12);
    }
}
