//! Resolved run configuration: defaults, then a TOML file, then flags.

use std::path::Path;

use frepel_core::energy::{CouplingConstant, MollifierWidth};
use frepel_core::fbm::{GeneratorOptions, HurstParameter, PathMethod, TimeGrid};
use frepel_core::gibbs::{EstimatorMethod, McmcSettings, SamplerConfig, DEFAULT_ESS_FLOOR};
use frepel_core::lab::{EpsilonPolicy, ExperimentPlan, StepsPolicy, DEFAULT_MIN_FIT_HORIZON};
use frepel_core::RngStream;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

/// Every knob any command reads. Commands ignore the fields they do not use,
/// but all of them are echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub hurst: f64,
    pub dim: usize,
    pub g: f64,
    /// Horizon `N` for single-grid commands.
    pub horizon: f64,
    pub n_steps: usize,
    /// When set, sweeps use `n_steps = N / dt` instead of a fixed count.
    pub dt: Option<f64>,
    pub epsilon: EpsilonPolicy,
    pub method: EstimatorMethod,
    pub replicas: usize,
    pub batches: usize,
    pub mcmc: McmcSettings,
    pub diagonal_included: bool,
    pub ess_floor: f64,
    pub path_method: PathMethod,
    pub allow_jitter: bool,
    pub clamp_eigenvalues: bool,
    pub ladder: Vec<f64>,
    pub min_fit_horizon: f64,
    pub a: f64,
    pub common_random_numbers: bool,
    pub widths: Vec<f64>,
    pub eps_ladder: Vec<f64>,
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hurst: 0.5,
            dim: 1,
            g: 0.5,
            horizon: 1.0,
            n_steps: 32,
            dt: None,
            epsilon: EpsilonPolicy::default(),
            method: EstimatorMethod::PriorImportance,
            replicas: 20_000,
            batches: 32,
            mcmc: McmcSettings::default(),
            diagonal_included: false,
            ess_floor: DEFAULT_ESS_FLOOR,
            path_method: PathMethod::Auto,
            allow_jitter: false,
            clamp_eigenvalues: false,
            ladder: vec![1.0, 2.0, 4.0, 8.0],
            min_fit_horizon: DEFAULT_MIN_FIT_HORIZON,
            a: 2.0,
            common_random_numbers: false,
            widths: vec![4.0, 2.0, 1.0, 0.5],
            eps_ladder: vec![0.2, 0.1, 0.05, 0.025],
            seed: None,
        }
    }
}

/// Recursive object merge; scalars, arrays and tagged (`kind`) objects in
/// `top` replace those in `base`.
pub fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) if !t.contains_key("kind") => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn resolve(file: Option<&Path>, flags: Map<String, Value>) -> CliResult<RunConfig> {
    let mut value = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read config: {e}"), path))?;
        let parsed: toml::Value =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid config file: {e}")))?;
        let as_json = serde_json::to_value(parsed).map_err(|e| CliError::usage(e.to_string()))?;
        overlay(&mut value, as_json);
    }
    overlay(&mut value, Value::Object(flags));
    serde_json::from_value(value).map_err(|e| CliError::usage(format!("invalid configuration: {e}")))
}

impl RunConfig {
    pub fn hurst(&self) -> CliResult<HurstParameter> {
        Ok(HurstParameter::new(self.hurst)?)
    }

    pub fn require_seed(&self) -> CliResult<u64> {
        self.seed.ok_or_else(|| CliError::usage("--seed is required for commands that draw random numbers"))
    }

    pub fn grid(&self) -> CliResult<TimeGrid> {
        Ok(TimeGrid::new(self.n_steps, self.horizon)?)
    }

    pub fn steps_policy(&self) -> StepsPolicy {
        match self.dt {
            Some(dt) => StepsPolicy::FixedDt { dt },
            None => StepsPolicy::FixedCount { n_steps: self.n_steps },
        }
    }

    /// Sampler template on `grid`, seeded from `seed` on stream 0.
    pub fn sampler(&self, grid: &TimeGrid) -> CliResult<SamplerConfig> {
        let seed = self.require_seed()?;
        let eps = self.epsilon.resolve(self.hurst()?, grid)?;
        let mut cfg = SamplerConfig::new(RngStream::new(seed, 0), eps, CouplingConstant::new(self.g)?);
        cfg.method = self.method;
        cfg.n_replicas = self.replicas;
        cfg.n_batches = self.batches;
        cfg.mcmc = self.mcmc;
        cfg.diagonal_included = self.diagonal_included;
        cfg.ess_floor = self.ess_floor;
        cfg.path_method = self.path_method;
        cfg.generator = GeneratorOptions { allow_jitter: self.allow_jitter, clamp_eigenvalues: self.clamp_eigenvalues };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn plan(&self) -> CliResult<ExperimentPlan> {
        let first = self
            .ladder
            .first()
            .copied()
            .ok_or_else(|| CliError::usage("the ladder is empty"))?;
        let grid = self.steps_policy().grid(first)?;
        let plan = ExperimentPlan {
            hurst: self.hurst()?,
            dimension: self.dim,
            g: CouplingConstant::new(self.g)?,
            epsilon_policy: self.epsilon,
            ladder: self.ladder.clone(),
            steps_policy: self.steps_policy(),
            sampler: self.sampler(&grid)?,
            min_fit_horizon: self.min_fit_horizon,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn epsilon_value(&self, grid: &TimeGrid) -> CliResult<MollifierWidth> {
        Ok(self.epsilon.resolve(self.hurst()?, grid)?)
    }
}
