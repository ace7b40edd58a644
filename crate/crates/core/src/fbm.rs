//! Exact sampling of d-dimensional fractional Brownian motion.
//!
//! Paths are built in increment space: a fractional Gaussian noise (fGn)
//! vector with Toeplitz covariance is drawn per coordinate and cumulatively
//! summed. Two exact generators are provided, a dense Cholesky factor and the
//! FFT circulant embedding. Both are linear maps from a standard Gaussian
//! noise vector, which the noise-space Metropolis sampler relies on.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::stats::Moments;

/// Dense factorizations above this size are refused by `PathMethod::Auto`.
pub const CHOLESKY_AUTO_LIMIT: usize = 256;

/// Eigenvalues of the circulant embedding within this fraction of the largest
/// one are rounding noise and are treated as zero.
const EIGENVALUE_ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParameter(f64);

impl HurstParameter {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(Error::Domain(format!("Hurst parameter must lie in (0,1), got {h}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for HurstParameter {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

impl From<HurstParameter> for f64 {
    fn from(h: HurstParameter) -> f64 {
        h.0
    }
}

impl fmt::Display for HurstParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Uniform grid `t_k = k * dt`, `k = 0..=n_steps`, with `dt = horizon / n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n_steps: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, horizon: f64) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::Domain(format!("time grid needs at least 2 steps, got {n_steps}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Domain(format!("horizon must be positive and finite, got {horizon}")));
        }
        Ok(Self { n_steps, horizon })
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Same step count, horizon multiplied by `a`.
    pub fn rescaled(&self, a: f64) -> Result<Self> {
        Self::new(self.n_steps, self.horizon * a)
    }
}

/// One discretized path; `positions` is row-major with shape `(n_steps + 1) x dimension`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathBundle {
    pub hurst: HurstParameter,
    pub grid: TimeGrid,
    pub dimension: usize,
    positions: Vec<f64>,
}

impl PathBundle {
    pub fn from_positions(
        hurst: HurstParameter,
        grid: TimeGrid,
        dimension: usize,
        positions: Vec<f64>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        if positions.len() != grid.n_points() * dimension {
            return Err(Error::Domain(format!(
                "expected {} coordinates, got {}",
                grid.n_points() * dimension,
                positions.len()
            )));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("path contains non-finite coordinates".into()));
        }
        Ok(Self { hurst, grid, dimension, positions })
    }

    #[inline]
    pub fn n_points(&self) -> usize {
        self.grid.n_points()
    }

    #[inline]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dimension..(k + 1) * self.dimension]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn endpoint(&self) -> &[f64] {
        self.point(self.grid.n_steps())
    }

    /// Squared end-to-end distance `|x(N) - x(0)|^2`.
    pub fn end_to_end_sq(&self) -> f64 {
        self.endpoint()
            .iter()
            .zip(self.point(0))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Per-coordinate fBm covariance `(t^{2H} + s^{2H} - |t-s|^{2H}) / 2`.
pub fn fbm_covariance(h: HurstParameter, s: f64, t: f64) -> Result<f64> {
    if !(s >= 0.0 && t >= 0.0) {
        return Err(Error::Domain(format!("fBm covariance needs non-negative times, got s={s}, t={t}")));
    }
    let two_h = 2.0 * h.value();
    Ok(0.5 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h)))
}

/// Autocovariance of the increment process at integer lag `k`.
pub fn fgn_lag(h: HurstParameter, dt: f64, k: usize) -> f64 {
    let two_h = 2.0 * h.value();
    let k = k as f64;
    let core = (k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h);
    0.5 * dt.powf(two_h) * core
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgnAutocovariance {
    pub hurst: HurstParameter,
    pub dt: f64,
    /// `values[k]` for lags `k = 0..n_steps`.
    pub values: Vec<f64>,
}

impl FgnAutocovariance {
    /// Lag-`k` value, symmetric in the sign of the lag.
    pub fn at(&self, lag: isize) -> f64 {
        self.values[lag.unsigned_abs()]
    }
}

pub fn fgn_autocovariance(h: HurstParameter, grid: &TimeGrid) -> FgnAutocovariance {
    let dt = grid.dt();
    let values = (0..grid.n_steps()).map(|k| fgn_lag(h, dt, k)).collect();
    FgnAutocovariance { hurst: h, dt, values }
}

/// A linear map from standard Gaussian noise to one coordinate's fGn increments.
pub trait FgnGenerator: Send + Sync {
    fn n_increments(&self) -> usize;

    fn noise_len(&self) -> usize;

    /// Writes `n_increments()` values into `out`.
    fn increments_from_noise(&self, noise: &[f64], out: &mut [f64]);
}

/// Lower-triangular Cholesky factor of the increment covariance.
#[derive(Debug, Clone)]
pub struct CholeskyFgn {
    n: usize,
    lower: Vec<f64>,
    jittered: bool,
}

impl CholeskyFgn {
    pub fn new(acov: &FgnAutocovariance, allow_jitter: bool) -> Result<Self> {
        Self::from_toeplitz(&acov.values, allow_jitter)
    }

    /// Factor the symmetric Toeplitz matrix with first row `row`.
    ///
    /// On failure with `allow_jitter`, retries exactly once with
    /// `1e-12 * row[0]` added to the diagonal.
    pub fn from_toeplitz(row: &[f64], allow_jitter: bool) -> Result<Self> {
        match factor_toeplitz(row, 0.0) {
            Ok(lower) => Ok(Self { n: row.len(), lower, jittered: false }),
            Err(e) if allow_jitter => {
                let ridge = 1e-12 * row.first().copied().unwrap_or(0.0);
                factor_toeplitz(row, ridge)
                    .map(|lower| Self { n: row.len(), lower, jittered: true })
                    .map_err(|_| e)
            }
            Err(e) => Err(e),
        }
    }

    pub fn jittered(&self) -> bool {
        self.jittered
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.n + j]
    }
}

fn factor_toeplitz(row: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let n = row.len();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = row[i - j];
            if i == j {
                s += ridge;
            }
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::Factorization { minor: i + 1, pivot: s });
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

impl FgnGenerator for CholeskyFgn {
    fn n_increments(&self) -> usize {
        self.n
    }

    fn noise_len(&self) -> usize {
        self.n
    }

    fn increments_from_noise(&self, noise: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            let row = &self.lower[i * self.n..i * self.n + i + 1];
            *o = row.iter().zip(noise).map(|(a, z)| a * z).sum();
        }
    }
}

/// Circulant embedding (Davies-Harte / Wood-Chan) of the increment covariance.
#[derive(Clone)]
pub struct CirculantFgn {
    n: usize,
    eigenvalues: Vec<f64>,
    scale: Vec<f64>,
    min_eigenvalue: f64,
    clamp_error_bound: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for CirculantFgn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CirculantFgn")
            .field("n", &self.n)
            .field("min_eigenvalue", &self.min_eigenvalue)
            .field("clamp_error_bound", &self.clamp_error_bound)
            .finish()
    }
}

impl CirculantFgn {
    pub fn new(h: HurstParameter, grid: &TimeGrid, clamp_eigenvalues: bool) -> Result<Self> {
        let dt = grid.dt();
        let lags: Vec<f64> = (0..=grid.n_steps()).map(|k| fgn_lag(h, dt, k)).collect();
        Self::from_lags(&lags, clamp_eigenvalues)
    }

    /// Embed the covariance with lags `0..=n` (length `n + 1`) into a circulant of size `2n`.
    pub fn from_lags(lags: &[f64], clamp_eigenvalues: bool) -> Result<Self> {
        let n = lags.len().saturating_sub(1);
        if n == 0 {
            return Err(Error::Domain("circulant embedding needs at least one increment".into()));
        }
        let m = 2 * n;
        let mut row: Vec<Complex64> = (0..m)
            .map(|j| Complex64::new(lags[if j <= n { j } else { m - j }], 0.0))
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut row);

        let mut eigenvalues: Vec<f64> = row.iter().map(|c| c.re).collect();
        let max = eigenvalues.iter().cloned().fold(0.0, f64::max);
        let min_eigenvalue = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let tol = EIGENVALUE_ROUNDING * max;
        let mut clamp_error_bound = 0.0;
        if min_eigenvalue < -tol {
            if !clamp_eigenvalues {
                return Err(Error::NegativeEigenvalue { min_eigenvalue });
            }
            // Entrywise covariance error of the truncated embedding is at most sum|dλ| / m.
            clamp_error_bound =
                eigenvalues.iter().filter(|&&l| l < 0.0).map(|l| -l).sum::<f64>() / m as f64;
        }
        for l in eigenvalues.iter_mut() {
            if *l < 0.0 {
                *l = 0.0;
            }
        }

        let mf = m as f64;
        let scale = eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &l)| if k == 0 || k == n { (l / mf).sqrt() } else { (l / (2.0 * mf)).sqrt() })
            .collect();
        Ok(Self { n, eigenvalues, scale, min_eigenvalue, clamp_error_bound, fft })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// Zero unless negative eigenvalues were clamped.
    pub fn clamp_error_bound(&self) -> f64 {
        self.clamp_error_bound
    }

    /// Inverse transform of the eigenvalues: the first row of the embedding.
    pub fn reconstruct_first_row(&self) -> Vec<f64> {
        let m = 2 * self.n;
        let mut buf: Vec<Complex64> = self.eigenvalues.iter().map(|&l| Complex64::new(l, 0.0)).collect();
        FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
        buf.iter().map(|c| c.re / m as f64).collect()
    }
}

impl FgnGenerator for CirculantFgn {
    fn n_increments(&self) -> usize {
        self.n
    }

    fn noise_len(&self) -> usize {
        2 * self.n
    }

    fn increments_from_noise(&self, noise: &[f64], out: &mut [f64]) {
        let n = self.n;
        let m = 2 * n;
        let mut w = vec![Complex64::new(0.0, 0.0); m];
        w[0] = Complex64::new(self.scale[0] * noise[0], 0.0);
        w[n] = Complex64::new(self.scale[n] * noise[1], 0.0);
        for k in 1..n {
            let c = Complex64::new(noise[2 * k], noise[2 * k + 1]) * self.scale[k];
            w[k] = c;
            w[m - k] = c.conj();
        }
        self.fft.process(&mut w);
        for (o, c) in out.iter_mut().zip(&w).take(n) {
            *o = c.re;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathMethod {
    Cholesky,
    Circulant,
    /// Cholesky up to `CHOLESKY_AUTO_LIMIT` steps, circulant above.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GeneratorOptions {
    pub allow_jitter: bool,
    pub clamp_eigenvalues: bool,
}

/// A reusable fBm sampler for fixed `(H, grid, d)`.
pub struct FbmSampler {
    hurst: HurstParameter,
    grid: TimeGrid,
    dimension: usize,
    generator: Box<dyn FgnGenerator>,
}

impl fmt::Debug for FbmSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FbmSampler")
            .field("hurst", &self.hurst)
            .field("grid", &self.grid)
            .field("dimension", &self.dimension)
            .finish()
    }
}

impl FbmSampler {
    pub fn new(
        hurst: HurstParameter,
        grid: TimeGrid,
        dimension: usize,
        method: PathMethod,
        options: GeneratorOptions,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        let use_cholesky = match method {
            PathMethod::Cholesky => true,
            PathMethod::Circulant => false,
            PathMethod::Auto => grid.n_steps() <= CHOLESKY_AUTO_LIMIT,
        };
        let generator: Box<dyn FgnGenerator> = if use_cholesky {
            let acov = fgn_autocovariance(hurst, &grid);
            Box::new(CholeskyFgn::new(&acov, options.allow_jitter)?)
        } else {
            Box::new(CirculantFgn::new(hurst, &grid, options.clamp_eigenvalues)?)
        };
        Ok(Self { hurst, grid, dimension, generator })
    }

    pub fn hurst(&self) -> HurstParameter {
        self.hurst
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Noise entries per coordinate.
    pub fn noise_len(&self) -> usize {
        self.generator.noise_len()
    }

    /// Total noise entries, coordinate-major.
    pub fn total_noise_len(&self) -> usize {
        self.generator.noise_len() * self.dimension
    }

    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R, noise: &mut [f64]) {
        for z in noise.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
    }

    /// Overwrite `positions` (row-major, `(n+1) x d`) with the path driven by `noise`.
    pub fn fill_positions(&self, noise: &[f64], positions: &mut [f64], scratch: &mut Vec<f64>) {
        let nl = self.generator.noise_len();
        let n = self.grid.n_steps();
        scratch.resize(n, 0.0);
        for c in 0..self.dimension {
            self.fill_coordinate(c, &noise[c * nl..(c + 1) * nl], positions, scratch);
        }
    }

    /// Recompute coordinate `c` only.
    pub fn fill_coordinate(&self, c: usize, noise: &[f64], positions: &mut [f64], scratch: &mut Vec<f64>) {
        let d = self.dimension;
        let n = self.grid.n_steps();
        scratch.resize(n, 0.0);
        self.generator.increments_from_noise(noise, scratch);
        let mut acc = 0.0;
        positions[c] = 0.0;
        for (k, inc) in scratch.iter().enumerate() {
            acc += inc;
            positions[(k + 1) * d + c] = acc;
        }
    }

    pub fn path_from_noise(&self, noise: &[f64]) -> PathBundle {
        let mut positions = vec![0.0; self.grid.n_points() * self.dimension];
        let mut scratch = Vec::new();
        self.fill_positions(noise, &mut positions, &mut scratch);
        PathBundle { hurst: self.hurst, grid: self.grid, dimension: self.dimension, positions }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PathBundle {
        let mut noise = vec![0.0; self.total_noise_len()];
        self.draw_noise(rng, &mut noise);
        self.path_from_noise(&noise)
    }
}

pub fn sample_path_cholesky(h: HurstParameter, grid: TimeGrid, d: usize, rng: RngStream) -> Result<PathBundle> {
    let sampler = FbmSampler::new(h, grid, d, PathMethod::Cholesky, GeneratorOptions::default())?;
    Ok(sampler.sample(&mut rng.rng()))
}

pub fn sample_path_circulant(h: HurstParameter, grid: TimeGrid, d: usize, rng: RngStream) -> Result<PathBundle> {
    let sampler = FbmSampler::new(h, grid, d, PathMethod::Circulant, GeneratorOptions::default())?;
    Ok(sampler.sample(&mut rng.rng()))
}

/// Per-gridpoint comparison of `B(t_k)` against `a^{-H} B(a t_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleReport {
    pub a: f64,
    pub times: Vec<f64>,
    pub mean_direct: Vec<f64>,
    pub mean_rescaled: Vec<f64>,
    pub var_direct: Vec<f64>,
    pub var_rescaled: Vec<f64>,
    pub var_direct_se: Vec<f64>,
    pub var_rescaled_se: Vec<f64>,
    /// Mean discrepancy in combined standard errors.
    pub mean_z: Vec<f64>,
    /// Variance discrepancy in combined standard errors.
    pub var_z: Vec<f64>,
}

impl RescaleReport {
    pub fn max_abs_mean_z(&self) -> f64 {
        self.mean_z.iter().fold(0.0, |m, z| m.max(z.abs()))
    }

    pub fn max_abs_var_z(&self) -> f64 {
        self.var_z.iter().fold(0.0, |m, z| m.max(z.abs()))
    }
}

/// Two-sample test that `{B(t)}` and `{a^{-H} B(a t)}` share a law.
///
/// The arms draw from `rng.child(0)` and `rng.child(1)`.
pub fn rescale_in_law_check(
    h: HurstParameter,
    grid: TimeGrid,
    d: usize,
    a: f64,
    n_replicas: usize,
    rng: RngStream,
) -> Result<RescaleReport> {
    rescale_in_law_check_with_streams(h, grid, d, a, n_replicas, rng.child(0), rng.child(1))
}

pub fn rescale_in_law_check_with_streams(
    h: HurstParameter,
    grid: TimeGrid,
    d: usize,
    a: f64,
    n_replicas: usize,
    rng_direct: RngStream,
    rng_rescaled: RngStream,
) -> Result<RescaleReport> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("scale factor must be positive, got {a}")));
    }
    let direct = FbmSampler::new(h, grid, d, PathMethod::Auto, GeneratorOptions::default())?;
    let scaled_grid = grid.rescaled(a)?;
    let rescaled = FbmSampler::new(h, scaled_grid, d, PathMethod::Auto, GeneratorOptions::default())?;
    let factor = a.powf(-h.value());

    let collect = |sampler: &FbmSampler, stream: RngStream, factor: f64| {
        let mut rng = stream.rng();
        let mut moments = vec![Moments::default(); grid.n_steps()];
        for _ in 0..n_replicas {
            let path = sampler.sample(&mut rng);
            for (k, m) in moments.iter_mut().enumerate() {
                for &x in path.point(k + 1) {
                    m.push(factor * x);
                }
            }
        }
        moments
    };
    let ma = collect(&direct, rng_direct, 1.0);
    let mb = collect(&rescaled, rng_rescaled, factor);

    let mut report = RescaleReport {
        a,
        times: (1..=grid.n_steps()).map(|k| grid.time(k)).collect(),
        mean_direct: vec![],
        mean_rescaled: vec![],
        var_direct: vec![],
        var_rescaled: vec![],
        var_direct_se: vec![],
        var_rescaled_se: vec![],
        mean_z: vec![],
        var_z: vec![],
    };
    for (x, y) in ma.iter().zip(&mb) {
        let mean_se = (x.mean_se().powi(2) + y.mean_se().powi(2)).sqrt();
        let var_se = (x.variance_se().powi(2) + y.variance_se().powi(2)).sqrt();
        report.mean_direct.push(x.mean());
        report.mean_rescaled.push(y.mean());
        report.var_direct.push(x.variance());
        report.var_rescaled.push(y.variance());
        report.var_direct_se.push(x.variance_se());
        report.var_rescaled_se.push(y.variance_se());
        report.mean_z.push(z_score(x.mean() - y.mean(), mean_se));
        report.var_z.push(z_score(x.variance() - y.variance(), var_se));
    }
    Ok(report)
}

/// `diff / se`, with `0/0 = 0`.
pub(crate) fn z_score(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        diff / se
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn h(x: f64) -> HurstParameter {
        HurstParameter::new(x).unwrap()
    }

    #[test]
    fn hurst_rejects_out_of_range() {
        for bad in [0.0, 1.0, -0.1, 1.2, f64::NAN] {
            assert!(HurstParameter::new(bad).is_err());
        }
    }

    #[test]
    fn grid_rejects_degenerate() {
        assert!(TimeGrid::new(1, 1.0).is_err());
        assert!(TimeGrid::new(4, 0.0).is_err());
        assert!(TimeGrid::new(4, f64::INFINITY).is_err());
        let g = TimeGrid::new(4, 2.0).unwrap();
        assert_eq!(g.dt(), 0.5);
        assert_eq!(g.time(4), 2.0);
    }

    #[test]
    fn covariance_values() {
        assert_eq!(fbm_covariance(h(0.5), 1.0, 3.0).unwrap(), 1.0);
        assert_relative_eq!(fbm_covariance(h(0.75), 1.0, 2.0).unwrap(), 2f64.sqrt(), max_relative = 1e-14);
        for hv in [0.1, 0.3, 0.9] {
            let t: f64 = 2.7;
            assert_relative_eq!(fbm_covariance(h(hv), t, t).unwrap(), t.powf(2.0 * hv), max_relative = 1e-14);
        }
        assert!(fbm_covariance(h(0.5), -1.0, 1.0).is_err());
    }

    #[test]
    fn fgn_lag_values() {
        let grid = TimeGrid::new(8, 8.0).unwrap();
        for hv in [0.2, 0.5, 0.8] {
            assert_relative_eq!(fgn_autocovariance(h(hv), &grid).values[0], 1.0, max_relative = 1e-15);
        }
        let half = fgn_autocovariance(h(0.5), &grid);
        assert!(half.values[1..].iter().all(|&v| v == 0.0));
        let acov = fgn_autocovariance(h(0.75), &grid);
        assert_relative_eq!(acov.values[1], 0.5 * (2f64.powf(1.5) - 2.0), max_relative = 1e-14);
        assert_relative_eq!(acov.values[1], 0.414_213_562_373_095, max_relative = 1e-12);
        assert_eq!(acov.at(-3), acov.at(3));
    }

    #[test]
    fn factorization_failure_names_minor() {
        let err = CholeskyFgn::from_toeplitz(&[1.0, 2.0, 0.0], false).unwrap_err();
        assert!(matches!(err, Error::Factorization { minor: 2, .. }), "{err:?}");
        // A singular (rank one) matrix factors once the ridge is allowed.
        let singular = CholeskyFgn::from_toeplitz(&[1.0, 1.0], true).unwrap();
        assert!(singular.jittered());
        assert!(CholeskyFgn::from_toeplitz(&[1.0, 1.0], false).is_err());
    }

    #[test]
    fn cholesky_reproduces_toeplitz() {
        let grid = TimeGrid::new(12, 3.0).unwrap();
        let acov = fgn_autocovariance(h(0.8), &grid);
        let c = CholeskyFgn::new(&acov, false).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let v: f64 = (0..12).map(|k| c.entry(i, k) * c.entry(j, k)).sum();
                assert_relative_eq!(v, acov.at(i as isize - j as isize), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn circulant_negative_eigenvalue_policy() {
        // Not a valid covariance: embedding has a negative eigenvalue.
        let lags = [1.0, 0.9, -0.9];
        let err = CirculantFgn::from_lags(&lags, false).unwrap_err();
        match err {
            Error::NegativeEigenvalue { min_eigenvalue } => assert!(min_eigenvalue < 0.0),
            other => panic!("unexpected {other:?}"),
        }
        let clamped = CirculantFgn::from_lags(&lags, true).unwrap();
        assert!(clamped.clamp_error_bound() > 0.0);
        assert!(clamped.eigenvalues().iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn circulant_round_trip() {
        for hv in [0.1, 0.5, 0.95] {
            let grid = TimeGrid::new(37, 5.0).unwrap();
            let emb = CirculantFgn::new(h(hv), &grid, false).unwrap();
            let row = emb.reconstruct_first_row();
            for k in 0..=37 {
                assert!((row[k] - fgn_lag(h(hv), grid.dt(), k)).abs() < 1e-10);
            }
        }
    }

    /// The circulant map is linear: its implied covariance `A A^T`, built by
    /// feeding unit noise vectors, must equal the Toeplitz fGn covariance.
    #[test]
    fn circulant_map_has_exact_covariance() {
        let grid = TimeGrid::new(9, 2.0).unwrap();
        let hv = h(0.3);
        let emb = CirculantFgn::new(hv, &grid, false).unwrap();
        let cols: Vec<Vec<f64>> = (0..emb.noise_len())
            .map(|j| {
                let mut z = vec![0.0; emb.noise_len()];
                z[j] = 1.0;
                let mut out = vec![0.0; 9];
                emb.increments_from_noise(&z, &mut out);
                out
            })
            .collect();
        for i in 0..9 {
            for j in 0..9 {
                let v: f64 = cols.iter().map(|c| c[i] * c[j]).sum();
                assert!((v - fgn_lag(hv, grid.dt(), i.abs_diff(j))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn paths_start_at_origin_and_are_deterministic() {
        let grid = TimeGrid::new(16, 4.0).unwrap();
        for method in [PathMethod::Cholesky, PathMethod::Circulant] {
            let s = FbmSampler::new(h(0.35), grid, 3, method, GeneratorOptions::default()).unwrap();
            let a = s.sample(&mut RngStream::new(11, 2).rng());
            let b = s.sample(&mut RngStream::new(11, 2).rng());
            assert_eq!(a, b);
            assert!(a.point(0).iter().all(|&x| x == 0.0));
            assert!(a.positions().iter().all(|x| x.is_finite()));
        }
        let p = sample_path_cholesky(h(0.6), grid, 2, RngStream::new(3, 0)).unwrap();
        assert_eq!(p, sample_path_cholesky(h(0.6), grid, 2, RngStream::new(3, 0)).unwrap());
    }

    #[test]
    fn rescale_identity_is_exact_with_shared_streams() {
        let grid = TimeGrid::new(8, 2.0).unwrap();
        let s = RngStream::new(5, 9);
        let r = rescale_in_law_check_with_streams(h(0.3), grid, 2, 1.0, 200, s, s).unwrap();
        assert!(r.mean_z.iter().chain(&r.var_z).all(|&z| z == 0.0));
    }

    #[test]
    fn rescale_rejects_bad_factor() {
        let grid = TimeGrid::new(8, 2.0).unwrap();
        assert!(rescale_in_law_check(h(0.3), grid, 1, 0.0, 10, RngStream::new(1, 0)).is_err());
    }
}
