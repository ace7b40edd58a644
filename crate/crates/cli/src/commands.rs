//! Command bodies. Each data command writes its tables, then a manifest.

use std::path::Path;

use frepel_core::energy::{local_time, CouplingConstant};
use frepel_core::fbm::{FbmSampler, HurstParameter};
use frepel_core::flory::{classify_regime_real, flory_exponent, flory_index, recursion_diagnostics};
use frepel_core::gibbs::{estimate_partition, estimate_r2, EstimatorMethod, EstimatorResult};
use frepel_core::lab::{epsilon_stability_scan, fit_sweep, run_r2_sweep, slab_reduction_experiment, test_scale_invariance};
use frepel_core::RngStream;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, OutDir, RunManifest, Table};
use crate::svg::{regime_map_svg, Bounds};

/// Stream id of the single path written by `simulate`.
pub const SIMULATE_PATH_STREAM: u64 = 1;

fn quality(flagged: bool) -> &'static str {
    if flagged {
        "flagged"
    } else {
        "ok"
    }
}

/// An estimate as JSON with its `quality` field.
pub fn estimate_json(e: &EstimatorResult) -> Value {
    let mut v = serde_json::to_value(e).expect("estimates serialize");
    v["quality"] = json!(e.quality());
    v
}

pub fn predict(hurst: f64, dim: u32) -> CliResult<Value> {
    let h = HurstParameter::new(hurst)?;
    let prediction = flory_index(h, dim)?;
    let recursion = recursion_diagnostics(h, dim).ok();
    Ok(json!({ "prediction": prediction, "recursion": recursion }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeMapConfig {
    pub h_min: f64,
    pub h_max: f64,
    pub d_min: f64,
    pub d_max: f64,
    /// Grid points per axis.
    pub resolution: usize,
    pub svg: bool,
}

impl Default for RegimeMapConfig {
    fn default() -> Self {
        Self { h_min: 0.05, h_max: 0.95, d_min: 1.0, d_max: 19.0, resolution: 19, svg: true }
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    // Snap to 12 decimals so round grid values such as 0.5 come out exact.
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| ((lo + step * i as f64) * 1e12).round() / 1e12).collect()
}

pub fn regime_map(cfg: &RegimeMapConfig, out: &mut OutDir) -> CliResult<Value> {
    if !(cfg.h_min > 0.0 && cfg.h_max < 1.0 && cfg.h_min < cfg.h_max) {
        return Err(CliError::usage("hurst range must satisfy 0 < h-min < h-max < 1"));
    }
    if !(cfg.d_min > 0.0 && cfg.d_min < cfg.d_max) || cfg.resolution == 0 {
        return Err(CliError::usage("dimension range must satisfy 0 < d-min < d-max, resolution > 0"));
    }
    let mut table = Table::new(&["hurst", "dim", "nu", "nu_clipped", "labels"]);
    for h in axis(cfg.h_min, cfg.h_max, cfg.resolution) {
        for d in axis(cfg.d_min, cfg.d_max, cfg.resolution) {
            let nu = flory_exponent(h, d);
            let labels: Vec<&str> = classify_regime_real(h, d).into_iter().map(|l| l.as_str()).collect();
            table.row([fmt_f64(h), fmt_f64(d), fmt_f64(nu), fmt_f64(nu.min(1.0)), labels.join(";")]);
        }
    }
    out.write("regime_map.csv", &table.into_bytes())?;
    if cfg.svg {
        let svg = regime_map_svg(&Bounds { h_min: cfg.h_min, h_max: cfg.h_max, d_min: cfg.d_min, d_max: cfg.d_max });
        out.write("regime_map.svg", svg.as_bytes())?;
    }
    finish("regime-map", cfg, None, out, false)
}

fn finish<C: Serialize>(command: &str, cfg: &C, seed: Option<u64>, out: &OutDir, flagged: bool) -> CliResult<Value> {
    let manifest = RunManifest::new(command, cfg, seed, out);
    out.write_manifest(&manifest)?;
    Ok(json!({
        "command": command,
        "out_dir": out.root().display().to_string(),
        "outputs": manifest.outputs,
        "quality": quality(flagged),
    }))
}

pub fn simulate(cfg: &RunConfig, out: &mut OutDir) -> CliResult<Value> {
    let seed = cfg.require_seed()?;
    let h = cfg.hurst()?;
    let grid = cfg.grid()?;
    let sampler_cfg = cfg.sampler(&grid)?;
    let sampler = FbmSampler::new(h, grid, cfg.dim, cfg.path_method, sampler_cfg.generator)?;
    let path = sampler.sample(&mut RngStream::new(seed, SIMULATE_PATH_STREAM).rng());

    let mut header = vec!["t".to_string()];
    header.extend((1..=cfg.dim).map(|i| format!("x_{i}")));
    let mut table = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for k in 0..path.n_points() {
        let mut row = vec![fmt_f64(grid.time(k))];
        row.extend(path.point(k).iter().map(|&x| fmt_f64(x)));
        table.row(row);
    }
    out.write("path.csv", &table.into_bytes())?;

    let energy = local_time(&path, sampler_cfg.epsilon, cfg.diagonal_included).with_coupling(CouplingConstant::new(cfg.g)?);
    let r2 = estimate_r2(h, grid, cfg.dim, &sampler_cfg)?;
    let partition = match cfg.method {
        EstimatorMethod::PriorImportance => Some(estimate_partition(h, grid, cfg.dim, &sampler_cfg)?),
        EstimatorMethod::MetropolisNoise => None,
    };
    let flagged = !r2.reliable || partition.as_ref().is_some_and(|z| !z.reliable);
    let doc = json!({
        "path_energy": energy,
        "r2": estimate_json(&r2),
        "partition": partition.as_ref().map(estimate_json),
        "epsilon": sampler_cfg.epsilon.value(),
        "dt": grid.dt(),
        "quality": quality(flagged),
    });
    out.write_json("estimate.json", &doc)?;
    finish("simulate", cfg, Some(seed), out, flagged)
}

pub fn sweep(cfg: &RunConfig, out: &mut OutDir) -> CliResult<Value> {
    let plan = cfg.plan()?;
    let result = run_r2_sweep(&plan)?;
    let mut table = Table::new(&["N", "r2", "r2_stderr", "ess", "quality"]);
    for p in &result.points {
        let e = &p.estimate;
        table.row([fmt_f64(p.horizon), fmt_f64(e.value), fmt_f64(e.std_error), fmt_f64(e.ess), e.quality().to_string()]);
    }
    out.write("sweep.csv", &table.into_bytes())?;
    let fit = fit_sweep(&result, plan.min_fit_horizon).map_err(|e| CliError::numerical(e.to_string()))?;
    let points: Vec<Value> = result
        .points
        .iter()
        .map(|p| json!({ "N": p.horizon, "n_steps": p.n_steps, "epsilon": p.epsilon }))
        .collect();
    let mut doc = serde_json::to_value(&fit).expect("fits serialize");
    doc["points"] = json!(points);
    doc["partial"] = json!(result.partial);
    doc["quality"] = json!(quality(result.partial));
    out.write_json("fit.json", &doc)?;
    finish("sweep", cfg, cfg.seed, out, result.partial)
}

pub fn invariance(cfg: &RunConfig, out: &mut OutDir) -> CliResult<Value> {
    let grid = cfg.grid()?;
    let sampler_cfg = cfg.sampler(&grid)?;
    let report = test_scale_invariance(cfg.hurst()?, cfg.dim, grid, cfg.a, &sampler_cfg, cfg.common_random_numbers)?;
    let flagged = !report.lhs.reliable || !report.rhs.reliable;
    let mut doc = serde_json::to_value(&report).expect("reports serialize");
    doc["lhs"] = estimate_json(&report.lhs);
    doc["rhs"] = estimate_json(&report.rhs);
    doc["quality"] = json!(quality(flagged));
    out.write_json("invariance.json", &doc)?;
    finish("invariance", cfg, cfg.seed, out, flagged)
}

pub fn slab(cfg: &RunConfig, out: &mut OutDir) -> CliResult<Value> {
    let grid = cfg.grid()?;
    let sampler_cfg = cfg.sampler(&grid)?;
    let report = slab_reduction_experiment(cfg.hurst()?, cfg.dim, grid, &cfg.widths, &sampler_cfg)?;
    let mut table = Table::new(&["D", "r2_D", "stderr", "survivor_fraction"]);
    for r in &report.rungs {
        let (v, se) = r.estimate.as_ref().map_or((f64::NAN, f64::NAN), |e| (e.value, e.std_error));
        table.row([fmt_f64(r.width), fmt_f64(v), fmt_f64(se), fmt_f64(r.survivor_fraction)]);
    }
    out.write("slab.csv", &table.into_bytes())?;
    let flagged = !report.unconstrained.reliable
        || report.rungs.iter().any(|r| r.estimate.as_ref().is_none_or(|e| !e.reliable));
    let mut doc = serde_json::to_value(&report).expect("reports serialize");
    doc["unconstrained"] = estimate_json(&report.unconstrained);
    doc["quality"] = json!(quality(flagged));
    out.write_json("slab.json", &doc)?;
    finish("slab", cfg, cfg.seed, out, flagged)
}

pub fn eps_scan(cfg: &RunConfig, out: &mut OutDir) -> CliResult<Value> {
    let grid = cfg.grid()?;
    let sampler_cfg = cfg.sampler(&grid)?;
    let scan = epsilon_stability_scan(cfg.hurst()?, cfg.dim, grid, &cfg.eps_ladder, &sampler_cfg)?;
    let mut table = Table::new(&["epsilon", "Z", "Z_stderr", "r2", "r2_stderr"]);
    for p in &scan.points {
        table.row([
            fmt_f64(p.epsilon),
            fmt_f64(p.partition.value),
            fmt_f64(p.partition.std_error),
            fmt_f64(p.r2.value),
            fmt_f64(p.r2.std_error),
        ]);
    }
    out.write("eps_scan.csv", &table.into_bytes())?;
    let flagged = scan.points.iter().any(|p| !p.partition.reliable || !p.r2.reliable);
    let doc = json!({
        "r2_differences": scan.r2_differences,
        "differences_decreasing": scan.differences_decreasing(),
        "quality": quality(flagged),
    });
    out.write_json("eps_scan.json", &doc)?;
    finish("eps-scan", cfg, cfg.seed, out, flagged)
}

/// Re-run a manifest into `out` and compare data digests.
pub fn replay(manifest_path: &Path, out: &mut OutDir) -> CliResult<Value> {
    let manifest = RunManifest::read(manifest_path)?;
    let parse_run = || -> CliResult<RunConfig> {
        serde_json::from_value(manifest.config.clone()).map_err(|e| CliError::usage(format!("invalid manifest config: {e}")))
    };
    match manifest.command.as_str() {
        "regime-map" => {
            let cfg: RegimeMapConfig = serde_json::from_value(manifest.config.clone())
                .map_err(|e| CliError::usage(format!("invalid manifest config: {e}")))?;
            regime_map(&cfg, out)?
        }
        "simulate" => simulate(&parse_run()?, out)?,
        "sweep" => sweep(&parse_run()?, out)?,
        "invariance" => invariance(&parse_run()?, out)?,
        "slab" => slab(&parse_run()?, out)?,
        "eps-scan" => eps_scan(&parse_run()?, out)?,
        other => return Err(CliError::usage(format!("manifest names unknown command {other:?}"))),
    };
    let mut files = serde_json::Map::new();
    let mut identical = manifest.outputs.len() == out.digests().len();
    for (name, expected) in &manifest.outputs {
        let actual = out.digests().get(name);
        identical &= actual == Some(expected);
        files.insert(name.clone(), json!({ "expected": expected, "actual": actual }));
    }
    let doc = json!({ "command": manifest.command, "identical": identical, "files": files });
    if !identical {
        return Err(CliError::numerical("replayed outputs differ from the manifest digests").with_context(doc));
    }
    Ok(doc)
}
