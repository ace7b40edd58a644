//! Sweeps and statistical experiments on top of the samplers.
//!
//! All experiments derive their random streams from the sampler template's
//! stream: ladder point `j` uses `rng.child(j)`, test arms use `child(0)` and
//! `child(1)`. Re-running a plan therefore reproduces every number exactly.

use serde::{Deserialize, Serialize};

use crate::energy::{local_time, CouplingConstant, MollifierWidth};
use crate::error::{Error, Result};
use crate::fbm::{z_score, FbmSampler, GeneratorOptions, HurstParameter, PathBundle, PathMethod, TimeGrid};
use crate::flory::predicted_slab_exponent;
use crate::gibbs::{
    estimate_partition, estimate_r2, estimate_r2_slab, partition_from_ensemble, r2_from_weighted, sample_prior,
    EstimatorResult, SamplerConfig, SlabConstraint,
};
use crate::rng::RngStream;
use crate::stats::Moments;

pub const MIN_LADDER_LEN: usize = 4;
pub const DEFAULT_MIN_FIT_HORIZON: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EpsilonPolicy {
    /// `eps = c * dt^{2H}`.
    GridMatched { c: f64 },
    Fixed { epsilon: f64 },
}

impl Default for EpsilonPolicy {
    fn default() -> Self {
        Self::GridMatched { c: 1.0 }
    }
}

impl EpsilonPolicy {
    pub fn resolve(&self, h: HurstParameter, grid: &TimeGrid) -> Result<MollifierWidth> {
        match *self {
            Self::GridMatched { c } => MollifierWidth::grid_matched(c, h, grid),
            Self::Fixed { epsilon } => MollifierWidth::new(epsilon),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepsPolicy {
    FixedCount { n_steps: usize },
    /// `n_steps = round(N / dt)`.
    FixedDt { dt: f64 },
}

impl StepsPolicy {
    pub fn grid(&self, horizon: f64) -> Result<TimeGrid> {
        match *self {
            Self::FixedCount { n_steps } => TimeGrid::new(n_steps, horizon),
            Self::FixedDt { dt } => {
                if !(dt > 0.0) {
                    return Err(Error::InvalidPlan(format!("dt must be positive, got {dt}")));
                }
                TimeGrid::new((horizon / dt).round() as usize, horizon)
            }
        }
    }
}

/// A sweep over horizons. The template's `epsilon`, `g` and `rng` are
/// replaced per ladder point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub hurst: HurstParameter,
    pub dimension: usize,
    pub g: CouplingConstant,
    pub epsilon_policy: EpsilonPolicy,
    pub ladder: Vec<f64>,
    pub steps_policy: StepsPolicy,
    pub sampler: SamplerConfig,
    pub min_fit_horizon: f64,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.ladder.len() < MIN_LADDER_LEN {
            return Err(Error::InvalidPlan(format!(
                "ladder needs at least {MIN_LADDER_LEN} horizons, got {}",
                self.ladder.len()
            )));
        }
        if self.ladder.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
            return Err(Error::InvalidPlan("ladder horizons must be positive".into()));
        }
        if self.ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPlan("ladder must be strictly ascending".into()));
        }
        if self.dimension == 0 {
            return Err(Error::InvalidPlan("dimension must be positive".into()));
        }
        self.sampler.validate()
    }

    fn point_config(&self, grid: &TimeGrid, index: usize) -> Result<SamplerConfig> {
        Ok(SamplerConfig {
            epsilon: self.epsilon_policy.resolve(self.hurst, grid)?,
            g: self.g,
            rng: self.sampler.rng.child(index as u64),
            ..self.sampler
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub horizon: f64,
    pub n_steps: usize,
    pub epsilon: f64,
    pub estimate: EstimatorResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Set when any point was flagged unreliable.
    pub partial: bool,
}

pub fn run_r2_sweep(plan: &ExperimentPlan) -> Result<SweepResult> {
    plan.validate()?;
    let mut points = Vec::with_capacity(plan.ladder.len());
    for (j, &horizon) in plan.ladder.iter().enumerate() {
        let grid = plan.steps_policy.grid(horizon)?;
        let cfg = plan.point_config(&grid, j)?;
        let estimate = estimate_r2(plan.hurst, grid, plan.dimension, &cfg)?;
        points.push(SweepPoint { horizon, n_steps: grid.n_steps(), epsilon: cfg.epsilon.value(), estimate });
    }
    let partial = points.iter().any(|p| !p.estimate.reliable);
    Ok(SweepResult { points, partial })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub r_squared: f64,
    pub weighted: bool,
}

/// Least-squares line. With `sigmas`, weights are `1/sigma^2` and the slope
/// error is `sqrt(1 / S_xx)`; without, the error comes from the residuals.
pub fn fit_line(xs: &[f64], ys: &[f64], sigmas: Option<&[f64]>) -> Result<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(Error::Domain(format!("line fit needs at least 2 paired points, got {n}")));
    }
    let weights: Vec<f64> = match sigmas {
        Some(s) => s.iter().map(|s| 1.0 / (s * s)).collect(),
        None => vec![1.0; n],
    };
    let sw: f64 = weights.iter().sum();
    let xm = xs.iter().zip(&weights).map(|(x, w)| w * x).sum::<f64>() / sw;
    let ym = ys.iter().zip(&weights).map(|(y, w)| w * y).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let (dx, dy) = (xs[i] - xm, ys[i] - ym);
        sxx += weights[i] * dx * dx;
        sxy += weights[i] * dx * dy;
        syy += weights[i] * dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Domain("line fit needs at least two distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ssr: f64 = (0..n)
        .map(|i| {
            let r = ys[i] - intercept - slope * xs[i];
            weights[i] * r * r
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ssr / syy };
    let slope_std_error = if sigmas.is_some() {
        (1.0 / sxx).sqrt()
    } else if n > 2 {
        (ssr / (n as f64 - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit { slope, intercept, slope_std_error, r_squared, weighted: sigmas.is_some() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Slope on `(ln N, ln <R^2>)` axes, i.e. `2 nu`.
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub r_squared: f64,
    pub nu: f64,
    pub nu_std_error: f64,
    pub points_used: usize,
    pub weighted: bool,
}

/// Power-law fit `<R^2> ~ N^{2 nu}` over `(horizon, estimate)` pairs.
///
/// Points are weighted by the inverse variance of `ln <R^2>`
/// (`(se / value)^2`) when every point carries a positive error; otherwise
/// the fit is unweighted.
pub fn fit_exponent(points: &[(f64, &EstimatorResult)]) -> Result<FitResult> {
    if points.len() < MIN_LADDER_LEN {
        return Err(Error::InvalidPlan(format!(
            "exponent fit needs at least {MIN_LADDER_LEN} points, got {}",
            points.len()
        )));
    }
    if let Some((n, e)) = points.iter().find(|(_, e)| !(e.value > 0.0 && e.value.is_finite())) {
        return Err(Error::Domain(format!("non-positive estimate {} at N = {n}", e.value)));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.value.ln()).collect();
    let sigmas: Vec<f64> = points.iter().map(|(_, e)| e.std_error / e.value).collect();
    let weighted = sigmas.iter().all(|&s| s > 0.0 && s.is_finite());
    let line = fit_line(&xs, &ys, weighted.then_some(&sigmas[..]))?;
    Ok(FitResult {
        slope: line.slope,
        intercept: line.intercept,
        slope_std_error: line.slope_std_error,
        r_squared: line.r_squared,
        nu: line.slope / 2.0,
        nu_std_error: line.slope_std_error / 2.0,
        points_used: points.len(),
        weighted: line.weighted,
    })
}

/// Fit a sweep using horizons `N >= min_horizon`; if that leaves fewer than
/// `MIN_LADDER_LEN` points, the whole ladder is used.
pub fn fit_sweep(sweep: &SweepResult, min_horizon: f64) -> Result<FitResult> {
    let all: Vec<(f64, &EstimatorResult)> = sweep.points.iter().map(|p| (p.horizon, &p.estimate)).collect();
    let tail: Vec<(f64, &EstimatorResult)> = all.iter().copied().filter(|(n, _)| *n >= min_horizon).collect();
    if tail.len() >= MIN_LADDER_LEN {
        fit_exponent(&tail)
    } else {
        fit_exponent(&all)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceTestReport {
    pub a: f64,
    pub lhs: EstimatorResult,
    pub rhs: EstimatorResult,
    pub combined_std_error: f64,
    pub z_score: f64,
    pub g_lhs: f64,
    pub g_rhs: f64,
    pub horizon_lhs: f64,
    pub horizon_rhs: f64,
    pub dt_lhs: f64,
    pub dt_rhs: f64,
    pub epsilon_lhs: f64,
    pub epsilon_rhs: f64,
    pub n_steps: usize,
}

/// Compares `Z(g, N)` with `Z(a^{Hd-2} g, aN)`.
///
/// Both sides use the same step count; the right side rescales `dt` by `a`
/// and the mollifier width by `a^{2H}`. The arms use `rng.child(0)` and
/// `rng.child(1)`, or the template stream for both with
/// `common_random_numbers`.
pub fn test_scale_invariance(
    h: HurstParameter,
    d: usize,
    grid: TimeGrid,
    a: f64,
    config: &SamplerConfig,
    common_random_numbers: bool,
) -> Result<InvarianceTestReport> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("scale factor must be positive, got {a}")));
    }
    let hv = h.value();
    let rhs_grid = grid.rescaled(a)?;
    let g_rhs = CouplingConstant::new(config.g.value() * a.powf(hv * d as f64 - 2.0))?;
    let eps_rhs = MollifierWidth::new(config.epsilon.value() * a.powf(2.0 * hv))?;
    let (rng_lhs, rng_rhs) = if common_random_numbers {
        (config.rng, config.rng)
    } else {
        (config.rng.child(0), config.rng.child(1))
    };
    let lhs_cfg = SamplerConfig { rng: rng_lhs, ..*config };
    let rhs_cfg = SamplerConfig { rng: rng_rhs, g: g_rhs, epsilon: eps_rhs, ..*config };
    let lhs = estimate_partition(h, grid, d, &lhs_cfg)?;
    let rhs = estimate_partition(h, rhs_grid, d, &rhs_cfg)?;
    let combined = (lhs.std_error.powi(2) + rhs.std_error.powi(2)).sqrt();
    Ok(InvarianceTestReport {
        a,
        z_score: z_score((lhs.value - rhs.value).abs(), combined),
        combined_std_error: combined,
        g_lhs: config.g.value(),
        g_rhs: g_rhs.value(),
        horizon_lhs: grid.horizon(),
        horizon_rhs: rhs_grid.horizon(),
        dt_lhs: grid.dt(),
        dt_rhs: rhs_grid.dt(),
        epsilon_lhs: config.epsilon.value(),
        epsilon_rhs: eps_rhs.value(),
        n_steps: grid.n_steps(),
        lhs,
        rhs,
    })
}

/// Step count used to sample free endpoints.
pub const END_DENSITY_STEPS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndDensityReport {
    pub expected_variance: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub variance_z: f64,
    pub kurtosis: f64,
    pub kurtosis_se: f64,
    pub kurtosis_z: f64,
    pub expected_r2: f64,
    pub mean_r2: f64,
    pub mean_r2_se: f64,
    pub r2_z: f64,
    pub mean: f64,
    pub mean_se: f64,
    pub mean_z: f64,
}

impl EndDensityReport {
    pub fn max_abs_z(&self) -> f64 {
        [self.variance_z, self.kurtosis_z, self.r2_z, self.mean_z].iter().fold(0.0, |m, z| m.max(z.abs()))
    }
}

/// Moment checks of free fBm endpoints against the Gaussian end-point law.
pub fn verify_end_density(
    h: HurstParameter,
    d: usize,
    horizon: f64,
    n_replicas: usize,
    rng: RngStream,
) -> Result<EndDensityReport> {
    let grid = TimeGrid::new(END_DENSITY_STEPS, horizon)?;
    let sampler = FbmSampler::new(h, grid, d, PathMethod::Circulant, GeneratorOptions::default())?;
    let mut r = rng.rng();
    let mut coords = Moments::default();
    let mut r2 = Moments::default();
    for _ in 0..n_replicas {
        let path = sampler.sample(&mut r);
        path.endpoint().iter().for_each(|&x| coords.push(x));
        r2.push(path.end_to_end_sq());
    }
    let var = horizon.powf(2.0 * h.value());
    let kurtosis_se = (24.0 / coords.count() as f64).sqrt();
    Ok(EndDensityReport {
        expected_variance: var,
        variance: coords.variance(),
        variance_se: coords.variance_se(),
        variance_z: z_score(coords.variance() - var, coords.variance_se()),
        kurtosis: coords.kurtosis(),
        kurtosis_se,
        kurtosis_z: (coords.kurtosis() - 3.0) / kurtosis_se,
        expected_r2: d as f64 * var,
        mean_r2: r2.mean(),
        mean_r2_se: r2.mean_se(),
        r2_z: z_score(r2.mean() - d as f64 * var, r2.mean_se()),
        mean: coords.mean(),
        mean_se: coords.mean_se(),
        mean_z: z_score(coords.mean(), coords.mean_se()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsScanPoint {
    pub epsilon: f64,
    pub partition: EstimatorResult,
    pub r2: EstimatorResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsScan {
    pub points: Vec<EpsScanPoint>,
    /// `|<R^2>(eps_{j+1}) - <R^2>(eps_j)|`.
    pub r2_differences: Vec<f64>,
}

impl EpsScan {
    /// Whether successive differences shrink as the width decreases.
    pub fn differences_decreasing(&self) -> bool {
        self.r2_differences.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Estimates along a strictly descending width ladder.
///
/// Every rung reuses the template stream, so all rungs see the same paths
/// and the trajectory in `eps` carries no rung-to-rung sampling noise.
pub fn epsilon_stability_scan(
    h: HurstParameter,
    d: usize,
    grid: TimeGrid,
    eps_ladder: &[f64],
    config: &SamplerConfig,
) -> Result<EpsScan> {
    if eps_ladder.is_empty() {
        return Err(Error::InvalidPlan("empty epsilon ladder".into()));
    }
    if eps_ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidPlan("epsilon ladder must be strictly descending".into()));
    }
    let mut points = Vec::with_capacity(eps_ladder.len());
    for &e in eps_ladder {
        let cfg = SamplerConfig { epsilon: MollifierWidth::new(e)?, ..*config };
        let ensemble = sample_prior(h, grid, d, &cfg, None)?;
        let partition = partition_from_ensemble(&ensemble, cfg.ess_floor);
        let r2 = r2_from_weighted(&ensemble, cfg.ess_floor)
            .ok_or_else(|| Error::InvalidConfig(format!("all weights underflowed at eps = {e}")))?;
        points.push(EpsScanPoint { epsilon: e, partition, r2 });
    }
    let r2_differences = points.windows(2).map(|w| (w[1].r2.value - w[0].r2.value).abs()).collect();
    Ok(EpsScan { points, r2_differences })
}

/// Local time of one fixed path along a width ladder.
pub fn local_time_profile(path: &PathBundle, eps_ladder: &[f64], diagonal_included: bool) -> Result<Vec<f64>> {
    eps_ladder
        .iter()
        .map(|&e| Ok(local_time(path, MollifierWidth::new(e)?, diagonal_included).local_time))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabRung {
    pub width: f64,
    /// `None` when no sample survived.
    pub estimate: Option<EstimatorResult>,
    pub survivor_fraction: f64,
    /// `D / sqrt(<R^2>)`.
    pub scaled_width: f64,
    pub ratio: Option<f64>,
    pub ratio_std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabReport {
    pub unconstrained: EstimatorResult,
    pub rungs: Vec<SlabRung>,
    /// Fitted from rungs with `D / sqrt(<R^2>) <= 1`.
    pub fitted_y: Option<f64>,
    pub fitted_y_std_error: Option<f64>,
    /// `2 (nu(d-1)/nu(d) - 1)` from the Flory formula.
    pub predicted_y: f64,
    pub warnings: Vec<String>,
}

impl SlabReport {
    /// Narrowest rung whose estimate meets the ESS floor.
    pub fn smallest_surviving(&self) -> Option<(&SlabRung, &EstimatorResult)> {
        self.rungs
            .iter()
            .rev()
            .find_map(|r| r.estimate.as_ref().filter(|e| e.reliable).map(|e| (r, e)))
    }
}

/// `<R^2>_D` across a descending width ladder, constraining coordinate 1.
///
/// The unconstrained estimate uses `rng.child(0)` and rung `j` uses
/// `rng.child(j + 1)`.
pub fn slab_reduction_experiment(
    h: HurstParameter,
    d: usize,
    grid: TimeGrid,
    widths: &[f64],
    config: &SamplerConfig,
) -> Result<SlabReport> {
    if d < 2 {
        return Err(Error::InvalidPlan("slab experiment needs d >= 2".into()));
    }
    if widths.is_empty() || widths.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidPlan("slab width ladder must be non-empty and strictly descending".into()));
    }
    let free_cfg = SamplerConfig { rng: config.rng.child(0), ..*config };
    let unconstrained = estimate_r2(h, grid, d, &free_cfg)?;
    let root = unconstrained.value.sqrt();
    let mut warnings = unconstrained.warnings.clone();
    let mut rungs = Vec::with_capacity(widths.len());
    for (j, &width) in widths.iter().enumerate() {
        let slab = SlabConstraint::new(1, width)?;
        let cfg = SamplerConfig { rng: config.rng.child(j as u64 + 1), ..*config };
        let rung = match estimate_r2_slab(h, grid, d, &slab, &cfg) {
            Ok(e) => {
                let ratio = e.value / unconstrained.value;
                let rel = ((e.std_error / e.value).powi(2) + (unconstrained.std_error / unconstrained.value).powi(2)).sqrt();
                SlabRung {
                    width,
                    survivor_fraction: e.diagnostics.get("survivor_fraction").copied().unwrap_or(1.0),
                    scaled_width: width / root,
                    ratio: Some(ratio),
                    ratio_std_error: Some(ratio * rel),
                    estimate: Some(e),
                }
            }
            Err(Error::NoSurvivors { .. }) => {
                warnings.push(format!("no survivors at D = {width}; rung dropped from the fit"));
                SlabRung {
                    width,
                    estimate: None,
                    survivor_fraction: 0.0,
                    scaled_width: width / root,
                    ratio: None,
                    ratio_std_error: None,
                }
            }
            Err(e) => return Err(e),
        };
        rungs.push(rung);
    }

    let fit_points: Vec<(f64, f64, f64)> = rungs
        .iter()
        .filter(|r| r.scaled_width <= 1.0)
        .filter_map(|r| Some((r.scaled_width.ln(), r.ratio?.ln(), r.ratio_std_error? / r.ratio?)))
        .collect();
    let (mut fitted_y, mut fitted_y_std_error) = (None, None);
    if fit_points.len() >= 2 {
        let xs: Vec<f64> = fit_points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = fit_points.iter().map(|p| p.1).collect();
        let sig: Vec<f64> = fit_points.iter().map(|p| p.2).collect();
        let weighted = sig.iter().all(|&s| s > 0.0 && s.is_finite());
        if let Ok(line) = fit_line(&xs, &ys, weighted.then_some(&sig[..])) {
            fitted_y = Some(-line.slope);
            fitted_y_std_error = Some(line.slope_std_error);
        }
    } else {
        warnings.push("fewer than two surviving rungs with D <= sqrt(<R^2>); y not fitted".into());
    }

    Ok(SlabReport {
        unconstrained,
        rungs,
        fitted_y,
        fitted_y_std_error,
        predicted_y: predicted_slab_exponent(h.value(), d as f64),
        warnings,
    })
}
