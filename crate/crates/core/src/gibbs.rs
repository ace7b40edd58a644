//! Monte Carlo estimation of the Edwards-model partition function and
//! Gibbs-weighted end-to-end distances.
//!
//! Two samplers are available:
//!
//! * prior importance sampling: free fBm paths reweighted by `exp(-g L_eps)`,
//!   error bars by batch means (delta method for ratios);
//! * noise-space Metropolis: a chain on the standard Gaussian vector that
//!   drives the path. Redrawing noise coordinates from the prior leaves the
//!   Gaussian reference measure invariant, so only the energy difference
//!   enters the acceptance test. Error bars by block means.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{local_time_of_positions, CouplingConstant, MollifierWidth};
use crate::error::{Error, Result};
use crate::fbm::{FbmSampler, GeneratorOptions, HurstParameter, PathMethod, TimeGrid};
use crate::rng::RngStream;
use crate::stats::{batch_mean_se, ratio_batch_se, Moments};

pub const DEFAULT_ESS_FLOOR: f64 = 50.0;
pub const MIN_BLOCKS: usize = 8;
pub const ACCEPTANCE_WARN_LOW: f64 = 0.05;
pub const ACCEPTANCE_WARN_HIGH: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMethod {
    #[default]
    PriorImportance,
    MetropolisNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSettings {
    /// Steps per chain, burn-in included.
    pub n_steps: usize,
    pub burn_in: usize,
    pub block_size: usize,
    /// Noise coordinates redrawn per proposal.
    pub redraw_count: usize,
    pub n_chains: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self { n_steps: 20_000, burn_in: 2_000, block_size: 500, redraw_count: 1, n_chains: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub method: EstimatorMethod,
    pub n_replicas: usize,
    pub n_batches: usize,
    pub mcmc: McmcSettings,
    pub rng: RngStream,
    pub epsilon: MollifierWidth,
    pub g: CouplingConstant,
    pub diagonal_included: bool,
    pub ess_floor: f64,
    pub path_method: PathMethod,
    pub generator: GeneratorOptions,
}

impl SamplerConfig {
    /// Prior-importance defaults: 20 000 replicas in 32 batches, diagonal excluded.
    pub fn new(rng: RngStream, epsilon: MollifierWidth, g: CouplingConstant) -> Self {
        Self {
            method: EstimatorMethod::PriorImportance,
            n_replicas: 20_000,
            n_batches: 32,
            mcmc: McmcSettings::default(),
            rng,
            epsilon,
            g,
            diagonal_included: false,
            ess_floor: DEFAULT_ESS_FLOOR,
            path_method: PathMethod::Auto,
            generator: GeneratorOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            EstimatorMethod::PriorImportance => {
                if self.n_batches < MIN_BLOCKS {
                    return Err(Error::InvalidConfig(format!(
                        "need at least {MIN_BLOCKS} batches, got {}",
                        self.n_batches
                    )));
                }
                if self.n_replicas < self.n_batches {
                    return Err(Error::InvalidConfig(format!(
                        "{} replicas cannot fill {} batches",
                        self.n_replicas, self.n_batches
                    )));
                }
            }
            EstimatorMethod::MetropolisNoise => {
                let m = &self.mcmc;
                if m.burn_in >= m.n_steps {
                    return Err(Error::InvalidConfig(format!(
                        "burn-in {} must be below the step count {}",
                        m.burn_in, m.n_steps
                    )));
                }
                if m.block_size == 0 || m.redraw_count == 0 || m.n_chains == 0 {
                    return Err(Error::InvalidConfig("block size, redraw count and chain count must be positive".into()));
                }
                let blocks = m.n_chains * ((m.n_steps - m.burn_in) / m.block_size);
                if blocks < MIN_BLOCKS {
                    return Err(Error::InvalidConfig(format!(
                        "only {blocks} blocks after burn-in; need at least {MIN_BLOCKS}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Restriction of coordinate `coordinate_index` (1-based) to `[0, width]` at every grid point.
///
/// Paths are translated so the constrained coordinate starts at `width / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabConstraint {
    pub coordinate_index: usize,
    pub width: f64,
    /// Minimal (monomer-size) width; recorded, never used in computation.
    pub reference_width: Option<f64>,
}

impl SlabConstraint {
    pub fn new(coordinate_index: usize, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Domain(format!("slab width must be positive, got {width}")));
        }
        if coordinate_index == 0 {
            return Err(Error::Domain("slab coordinate index is 1-based".into()));
        }
        Ok(Self { coordinate_index, width, reference_width: None })
    }

    fn check_dimension(&self, d: usize) -> Result<()> {
        if self.coordinate_index > d {
            return Err(Error::Domain(format!(
                "slab coordinate {} exceeds dimension {d}",
                self.coordinate_index
            )));
        }
        Ok(())
    }

    /// Whether a path started at the origin stays inside once shifted to start at `width / 2`.
    pub fn admits(&self, positions: &[f64], d: usize) -> bool {
        let half = 0.5 * self.width;
        positions
            .iter()
            .skip(self.coordinate_index - 1)
            .step_by(d)
            .all(|&x| x + half >= 0.0 && x + half <= self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub r2: f64,
    pub local_time: f64,
    /// `-g L_eps`, or `-inf` for a path rejected by a constraint.
    pub log_weight: f64,
}

impl SampleRecord {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEnsemble {
    pub records: Vec<SampleRecord>,
    /// Consecutive records forming one batch (importance sampling) or block (MCMC).
    pub batch_len: usize,
    pub diagnostics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl WeightedEnsemble {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(sum w)^2 / sum w^2`, invariant to a common rescaling of the weights.
    pub fn ess(&self) -> f64 {
        let shift = self.max_log_weight();
        if shift == f64::NEG_INFINITY {
            return 0.0;
        }
        let (s1, s2) = self.records.iter().fold((0.0, 0.0), |(a, b), r| {
            let w = (r.log_weight - shift).exp();
            (a + w, b + w * w)
        });
        s1 * s1 / s2
    }

    fn max_log_weight(&self) -> f64 {
        self.records.iter().map(|r| r.log_weight).fold(f64::NEG_INFINITY, f64::max)
    }

    fn batches(&self) -> impl Iterator<Item = &[SampleRecord]> {
        self.records.chunks_exact(self.batch_len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub value: f64,
    pub std_error: f64,
    pub ess: f64,
    pub n_samples: usize,
    pub reliable: bool,
    pub diagnostics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl EstimatorResult {
    pub fn quality(&self) -> &'static str {
        if self.reliable {
            "ok"
        } else {
            "flagged"
        }
    }

    /// `|self - other|` in units of the combined standard error.
    pub fn z_against(&self, other: &EstimatorResult) -> f64 {
        let se = (self.std_error.powi(2) + other.std_error.powi(2)).sqrt();
        crate::fbm::z_score((self.value - other.value).abs(), se)
    }
}

fn build_sampler(h: HurstParameter, grid: TimeGrid, d: usize, config: &SamplerConfig) -> Result<FbmSampler> {
    FbmSampler::new(h, grid, d, config.path_method, config.generator)
}

/// Draw `n_batches * floor(n_replicas / n_batches)` free paths, batch `b` from `rng.child(b)`.
pub fn sample_prior(
    h: HurstParameter,
    grid: TimeGrid,
    d: usize,
    config: &SamplerConfig,
    slab: Option<&SlabConstraint>,
) -> Result<WeightedEnsemble> {
    let mut cfg = *config;
    cfg.method = EstimatorMethod::PriorImportance;
    cfg.validate()?;
    if let Some(s) = slab {
        s.check_dimension(d)?;
    }
    let sampler = build_sampler(h, grid, d, &cfg)?;
    let per_batch = cfg.n_replicas / cfg.n_batches;
    let g = cfg.g.value();
    let dt = grid.dt();

    let batches: Vec<Vec<SampleRecord>> = (0..cfg.n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = cfg.rng.child(b as u64).rng();
            let mut noise = vec![0.0; sampler.total_noise_len()];
            let mut positions = vec![0.0; grid.n_points() * d];
            let mut scratch = Vec::new();
            (0..per_batch)
                .map(|_| {
                    sampler.draw_noise(&mut rng, &mut noise);
                    sampler.fill_positions(&noise, &mut positions, &mut scratch);
                    let r2 = end_to_end_sq(&positions, d);
                    if slab.is_some_and(|s| !s.admits(&positions, d)) {
                        return SampleRecord { r2, local_time: f64::NAN, log_weight: f64::NEG_INFINITY };
                    }
                    let lt = local_time_of_positions(&positions, d, dt, cfg.epsilon, cfg.diagonal_included);
                    SampleRecord { r2, local_time: lt, log_weight: -g * lt }
                })
                .collect()
        })
        .collect();

    let records: Vec<SampleRecord> = batches.into_iter().flatten().collect();
    let mut diagnostics = BTreeMap::new();
    if slab.is_some() {
        let inside = records.iter().filter(|r| r.log_weight > f64::NEG_INFINITY).count();
        diagnostics.insert("survivor_fraction".into(), inside as f64 / records.len() as f64);
    }
    Ok(WeightedEnsemble { records, batch_len: per_batch, diagnostics, warnings: vec![] })
}

fn end_to_end_sq(positions: &[f64], d: usize) -> f64 {
    let n = positions.len() / d;
    let (start, end) = (&positions[..d], &positions[(n - 1) * d..]);
    start.iter().zip(end).map(|(a, b)| (b - a) * (b - a)).sum()
}

/// Mean of `exp(-g L_eps)` over the prior; exactly 1 with zero error at `g = 0`.
pub fn estimate_partition(
    h: HurstParameter,
    grid: TimeGrid,
    d: usize,
    config: &SamplerConfig,
) -> Result<EstimatorResult> {
    if config.method != EstimatorMethod::PriorImportance {
        return Err(Error::InvalidConfig("the partition function is estimated by prior importance sampling only".into()));
    }
    let ensemble = sample_prior(h, grid, d, config, None)?;
    Ok(partition_from_ensemble(&ensemble, config.ess_floor))
}

pub fn partition_from_ensemble(ensemble: &WeightedEnsemble, ess_floor: f64) -> EstimatorResult {
    let means: Vec<f64> = ensemble
        .batches()
        .map(|b| b.iter().map(SampleRecord::weight).sum::<f64>() / b.len() as f64)
        .collect();
    let (value, std_error) = batch_mean_se(&means);
    let ess = ensemble.ess();
    EstimatorResult {
        value,
        std_error,
        ess,
        n_samples: ensemble.len(),
        reliable: ess >= ess_floor,
        diagnostics: ensemble.diagnostics.clone(),
        warnings: ensemble.warnings.clone(),
    }
}

/// Self-normalized `E[R^2 w] / E[w]` over an importance ensemble.
pub fn r2_from_weighted(ensemble: &WeightedEnsemble, ess_floor: f64) -> Option<EstimatorResult> {
    let shift = ensemble.max_log_weight();
    if shift == f64::NEG_INFINITY {
        return None;
    }
    let (num, den): (Vec<f64>, Vec<f64>) = ensemble
        .batches()
        .map(|b| {
            b.iter().fold((0.0, 0.0), |(y, x), r| {
                let w = (r.log_weight - shift).exp();
                (y + w * r.r2, x + w)
            })
        })
        .unzip();
    let (value, std_error) = ratio_batch_se(&num, &den);
    let ess = ensemble.ess();
    Some(EstimatorResult {
        value,
        std_error,
        ess,
        n_samples: ensemble.len(),
        reliable: ess >= ess_floor,
        diagnostics: ensemble.diagnostics.clone(),
        warnings: ensemble.warnings.clone(),
    })
}

/// Block-means estimate of `<R^2>` from an unweighted MCMC ensemble.
pub fn r2_from_chain(ensemble: &WeightedEnsemble, ess_floor: f64) -> EstimatorResult {
    let blocks: Vec<f64> = ensemble
        .batches()
        .map(|b| b.iter().map(|r| r.r2).sum::<f64>() / b.len() as f64)
        .collect();
    let (value, std_error) = batch_mean_se(&blocks);
    let used = blocks.len() * ensemble.batch_len;
    let mut m = Moments::default();
    ensemble.records[..used].iter().for_each(|r| m.push(r.r2));
    // Integrated-autocorrelation estimate of the effective sample count.
    let ess = if std_error > 0.0 { (m.variance() / (std_error * std_error)).min(used as f64) } else { used as f64 };
    EstimatorResult {
        value,
        std_error,
        ess,
        n_samples: used,
        reliable: ess >= ess_floor,
        diagnostics: ensemble.diagnostics.clone(),
        warnings: ensemble.warnings.clone(),
    }
}

/// Gibbs-weighted mean-square end-to-end distance.
pub fn estimate_r2(h: HurstParameter, grid: TimeGrid, d: usize, config: &SamplerConfig) -> Result<EstimatorResult> {
    match config.method {
        EstimatorMethod::PriorImportance => {
            let ensemble = sample_prior(h, grid, d, config, None)?;
            r2_from_weighted(&ensemble, config.ess_floor)
                .ok_or_else(|| Error::InvalidConfig("all importance weights underflowed".into()))
        }
        EstimatorMethod::MetropolisNoise => {
            let ensemble = run_metropolis(h, grid, d, config)?;
            Ok(r2_from_chain(&ensemble, config.ess_floor))
        }
    }
}

/// `<R^2>_D` with the constrained coordinate confined to the slab.
///
/// Prior importance sampling weights paths by `1_slab * exp(-g L_eps)`;
/// the Metropolis variant rejects every proposal that leaves the slab.
pub fn estimate_r2_slab(
    h: HurstParameter,
    grid: TimeGrid,
    d: usize,
    slab: &SlabConstraint,
    config: &SamplerConfig,
) -> Result<EstimatorResult> {
    slab.check_dimension(d)?;
    match config.method {
        EstimatorMethod::PriorImportance => {
            let ensemble = sample_prior(h, grid, d, config, Some(slab))?;
            r2_from_weighted(&ensemble, config.ess_floor)
                .ok_or(Error::NoSurvivors { width: slab.width, replicas: ensemble.len() })
        }
        EstimatorMethod::MetropolisNoise => {
            let ensemble = run_chains(h, grid, d, config, Some(slab))?;
            Ok(r2_from_chain(&ensemble, config.ess_floor))
        }
    }
}

/// Noise-space Metropolis chains; post-burn-in samples with unit weights.
pub fn run_metropolis(h: HurstParameter, grid: TimeGrid, d: usize, config: &SamplerConfig) -> Result<WeightedEnsemble> {
    run_chains(h, grid, d, config, None)
}

/// Attempts at drawing a slab-admissible starting state from the prior.
const MAX_START_ATTEMPTS: usize = 100_000;

struct ChainOutput {
    records: Vec<SampleRecord>,
    accepted: usize,
    proposals: usize,
    inside: usize,
}

fn run_chains(
    h: HurstParameter,
    grid: TimeGrid,
    d: usize,
    config: &SamplerConfig,
    slab: Option<&SlabConstraint>,
) -> Result<WeightedEnsemble> {
    let mut cfg = *config;
    cfg.method = EstimatorMethod::MetropolisNoise;
    cfg.validate()?;
    let sampler = build_sampler(h, grid, d, &cfg)?;
    let m = cfg.mcmc;
    let total_noise = sampler.total_noise_len();
    if m.redraw_count > total_noise {
        return Err(Error::InvalidConfig(format!(
            "redraw count {} exceeds the {total_noise} noise coordinates",
            m.redraw_count
        )));
    }

    let chains: Vec<ChainOutput> = (0..m.n_chains)
        .into_par_iter()
        .map(|c| run_single_chain(&sampler, &cfg, slab, cfg.rng.child(c as u64)))
        .collect::<Result<_>>()?;

    // Keep whole blocks only so that blocks never straddle two chains.
    let kept = ((m.n_steps - m.burn_in) / m.block_size) * m.block_size;
    let mut records = Vec::with_capacity(kept * m.n_chains);
    let (mut accepted, mut proposals, mut inside) = (0, 0, 0);
    for ch in chains {
        records.extend_from_slice(&ch.records[..kept]);
        accepted += ch.accepted;
        proposals += ch.proposals;
        inside += ch.inside;
    }
    let rate = accepted as f64 / proposals as f64;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("acceptance_rate".into(), rate);
    if slab.is_some() {
        diagnostics.insert("survivor_fraction".into(), inside as f64 / proposals as f64);
    }
    let mut warnings = vec![];
    if !(ACCEPTANCE_WARN_LOW..=ACCEPTANCE_WARN_HIGH).contains(&rate) {
        warnings.push(format!(
            "acceptance rate {rate:.3} outside [{ACCEPTANCE_WARN_LOW}, {ACCEPTANCE_WARN_HIGH}]"
        ));
    }
    Ok(WeightedEnsemble { records, batch_len: m.block_size, diagnostics, warnings })
}

fn run_single_chain(
    sampler: &FbmSampler,
    cfg: &SamplerConfig,
    slab: Option<&SlabConstraint>,
    stream: RngStream,
) -> Result<ChainOutput> {
    let d = sampler.dimension();
    let dt = sampler.grid().dt();
    let nl = sampler.noise_len();
    let total_noise = sampler.total_noise_len();
    let g = cfg.g.value();
    let m = cfg.mcmc;
    let mut rng = stream.rng();

    let mut noise = vec![0.0; total_noise];
    let mut positions = vec![0.0; sampler.grid().n_points() * d];
    let mut scratch = Vec::new();
    let mut attempts = 0;
    loop {
        sampler.draw_noise(&mut rng, &mut noise);
        sampler.fill_positions(&noise, &mut positions, &mut scratch);
        if slab.is_none_or(|s| s.admits(&positions, d)) {
            break;
        }
        attempts += 1;
        if attempts >= MAX_START_ATTEMPTS {
            return Err(Error::NoSurvivors { width: slab.map_or(0.0, |s| s.width), replicas: attempts });
        }
    }
    let lt_of = |p: &[f64]| local_time_of_positions(p, d, dt, cfg.epsilon, cfg.diagonal_included);
    let mut lt = lt_of(&positions);

    let mut proposal_noise = noise.clone();
    let mut proposal_positions = positions.clone();
    let mut touched = vec![false; d];
    let mut out = ChainOutput {
        records: Vec::with_capacity(m.n_steps - m.burn_in),
        accepted: 0,
        proposals: 0,
        inside: 0,
    };

    for step in 0..m.n_steps {
        touched.iter_mut().for_each(|t| *t = false);
        for idx in index::sample(&mut rng, total_noise, m.redraw_count).iter() {
            proposal_noise[idx] = rng.sample(StandardNormal);
            touched[idx / nl] = true;
        }
        for (c, _) in touched.iter().enumerate().filter(|(_, t)| **t) {
            sampler.fill_coordinate(c, &proposal_noise[c * nl..(c + 1) * nl], &mut proposal_positions, &mut scratch);
        }
        out.proposals += 1;

        let admissible = slab.is_none_or(|s| s.admits(&proposal_positions, d));
        let mut accept = false;
        let mut proposal_lt = lt;
        if admissible {
            out.inside += 1;
            proposal_lt = lt_of(&proposal_positions);
            let delta_energy = g * (proposal_lt - lt);
            accept = delta_energy <= 0.0 || rng.random::<f64>() < (-delta_energy).exp();
        }
        if accept {
            out.accepted += 1;
            noise.copy_from_slice(&proposal_noise);
            positions.copy_from_slice(&proposal_positions);
            lt = proposal_lt;
        } else {
            proposal_noise.copy_from_slice(&noise);
            proposal_positions.copy_from_slice(&positions);
        }
        if step >= m.burn_in {
            out.records.push(SampleRecord { r2: end_to_end_sq(&positions, d), local_time: lt, log_weight: 0.0 });
        }
    }
    Ok(out)
}
