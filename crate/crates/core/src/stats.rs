//! Streaming moments and batch-means error estimation.

use serde::{Deserialize, Serialize};

/// Running central moments up to fourth order (Pébay's update).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n as f64 - 1.0)
        }
    }

    pub fn mean_se(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }

    /// Large-sample standard error of the sample variance, `sqrt((mu4 - s^4) / n)`.
    pub fn variance_se(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mu4 = self.m4 / n;
        let s2 = self.m2 / n;
        ((mu4 - s2 * s2).max(0.0) / n).sqrt()
    }

    /// Non-excess kurtosis `mu4 / mu2^2` (3 for a Gaussian).
    pub fn kurtosis(&self) -> f64 {
        let n = self.n as f64;
        let s2 = self.m2 / n;
        (self.m4 / n) / (s2 * s2)
    }
}

/// Mean and standard error from equally sized batch means.
pub fn batch_mean_se(batch_means: &[f64]) -> (f64, f64) {
    let b = batch_means.len();
    if b == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = batch_means.iter().sum::<f64>() / b as f64;
    if b < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = batch_means.iter().map(|m| (m - mean) * (m - mean)).sum();
    (mean, (ss / ((b * (b - 1)) as f64)).sqrt())
}

/// Ratio `sum(num) / sum(den)` over batches with a delta-method standard error.
///
/// `num[b]` and `den[b]` are per-batch totals of equally sized batches.
pub fn ratio_batch_se(num: &[f64], den: &[f64]) -> (f64, f64) {
    let b = num.len();
    assert_eq!(b, den.len());
    let total_den: f64 = den.iter().sum();
    let ratio = num.iter().sum::<f64>() / total_den;
    if b < 2 {
        return (ratio, 0.0);
    }
    let den_mean = total_den / b as f64;
    let ss: f64 = num
        .iter()
        .zip(den)
        .map(|(y, x)| {
            let r = y - ratio * x;
            r * r
        })
        .sum();
    let se = (ss / ((b * (b - 1)) as f64)).sqrt() / den_mean;
    (ratio, se)
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}
