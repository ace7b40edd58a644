//! `frepel` command-line workbench.
//!
//! Data commands resolve a [`config::RunConfig`] from defaults, an optional
//! TOML file and flags (in rising precedence), write their tables into the
//! output directory and finish with a `manifest.json` that `replay` can
//! re-execute bit for bit.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod svg;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::commands::RegimeMapConfig;
use crate::error::{CliError, CliResult, EXIT_OK, EXIT_USAGE};
use crate::output::{default_out_dir, OutDir};

#[derive(Debug, Parser)]
#[command(name = "frepel", version, about = "Self-repelling fractional Brownian motion workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flory index, regime labels and recursion diagnostics for (H, d).
    Predict {
        #[arg(long)]
        hurst: f64,
        #[arg(long)]
        dim: u32,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Tabulate the (H, d) plane and draw the regime boundaries.
    RegimeMap(RegimeMapArgs),
    /// Sample one path and estimate Z and <R^2> on a single grid.
    Simulate(RunArgs),
    /// <R^2> over a horizon ladder plus the power-law fit.
    Sweep(RunArgs),
    /// Compare Z(g, N) with Z(a^{Hd-2} g, aN).
    Invariance(RunArgs),
    /// Slab-constrained <R^2>_D over a descending width ladder.
    Slab(RunArgs),
    /// Z and <R^2> along a descending mollifier-width ladder.
    EpsScan(RunArgs),
    /// Re-run a manifest and check the data digests.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Defaults to `replay/` next to the manifest.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Args)]
pub struct RegimeMapArgs {
    #[arg(long)]
    pub h_min: Option<f64>,
    #[arg(long)]
    pub h_max: Option<f64>,
    #[arg(long)]
    pub d_min: Option<f64>,
    #[arg(long)]
    pub d_max: Option<f64>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub no_svg: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    PriorImportance,
    MetropolisNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PathMethodArg {
    Cholesky,
    Circulant,
    Auto,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Master seed; mandatory so no run draws hidden entropy.
    #[arg(long)]
    pub seed: u64,
    /// TOML file with `RunConfig` keys; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Defaults to $FREPEL_OUT_DIR, then `frepel-out`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub hurst: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub g: Option<f64>,
    /// Horizon.
    #[arg(long = "N")]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub n_steps: Option<usize>,
    /// Fixed time step for sweeps instead of a fixed step count.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Fixed mollifier width.
    #[arg(long, conflicts_with = "eps_c")]
    pub epsilon: Option<f64>,
    /// Grid-matched mollifier width `c * dt^{2H}`.
    #[arg(long)]
    pub eps_c: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub mcmc_steps: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub block_size: Option<usize>,
    #[arg(long)]
    pub redraw: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub diagonal: bool,
    #[arg(long)]
    pub ess_floor: Option<f64>,
    #[arg(long, value_enum)]
    pub path_method: Option<PathMethodArg>,
    #[arg(long)]
    pub allow_jitter: bool,
    #[arg(long)]
    pub clamp_eigenvalues: bool,
    /// Comma-separated ascending horizons.
    #[arg(long, value_delimiter = ',')]
    pub ladder: Option<Vec<f64>>,
    #[arg(long)]
    pub min_fit_horizon: Option<f64>,
    /// Scale factor for `invariance`.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub common_random_numbers: bool,
    /// Comma-separated descending slab widths.
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<f64>>,
    /// Comma-separated descending mollifier widths.
    #[arg(long, value_delimiter = ',')]
    pub eps_ladder: Option<Vec<f64>>,
}

impl RunArgs {
    /// Flags that were actually given, as a config overlay.
    pub fn overlay(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("seed", Some(json!(self.seed)));
        put("hurst", self.hurst.map(|v| json!(v)));
        put("dim", self.dim.map(|v| json!(v)));
        put("g", self.g.map(|v| json!(v)));
        put("horizon", self.horizon.map(|v| json!(v)));
        put("n_steps", self.n_steps.map(|v| json!(v)));
        put("dt", self.dt.map(|v| json!(v)));
        put("epsilon", self.epsilon.map(|e| json!({ "kind": "fixed", "epsilon": e })));
        put("epsilon", self.eps_c.map(|c| json!({ "kind": "grid-matched", "c": c })));
        put(
            "method",
            self.method.map(|m| {
                json!(match m {
                    MethodArg::PriorImportance => "prior-importance",
                    MethodArg::MetropolisNoise => "metropolis-noise",
                })
            }),
        );
        put("replicas", self.replicas.map(|v| json!(v)));
        put("batches", self.batches.map(|v| json!(v)));
        put("diagonal_included", self.diagonal.then_some(json!(true)));
        put("ess_floor", self.ess_floor.map(|v| json!(v)));
        put(
            "path_method",
            self.path_method.map(|p| {
                json!(match p {
                    PathMethodArg::Cholesky => "cholesky",
                    PathMethodArg::Circulant => "circulant",
                    PathMethodArg::Auto => "auto",
                })
            }),
        );
        put("allow_jitter", self.allow_jitter.then_some(json!(true)));
        put("clamp_eigenvalues", self.clamp_eigenvalues.then_some(json!(true)));
        put("ladder", self.ladder.as_ref().map(|v| json!(v)));
        put("min_fit_horizon", self.min_fit_horizon.map(|v| json!(v)));
        put("a", self.a.map(|v| json!(v)));
        put("common_random_numbers", self.common_random_numbers.then_some(json!(true)));
        put("widths", self.widths.as_ref().map(|v| json!(v)));
        put("eps_ladder", self.eps_ladder.as_ref().map(|v| json!(v)));

        let mut mcmc = Map::new();
        for (k, v) in [
            ("n_steps", self.mcmc_steps),
            ("burn_in", self.burn_in),
            ("block_size", self.block_size),
            ("redraw_count", self.redraw),
            ("n_chains", self.chains),
        ] {
            if let Some(v) = v {
                mcmc.insert(k.into(), json!(v));
            }
        }
        if !mcmc.is_empty() {
            m.insert("mcmc".into(), Value::Object(mcmc));
        }
        m
    }

    fn out_dir(&self) -> CliResult<OutDir> {
        OutDir::create(self.out_dir.clone().unwrap_or_else(default_out_dir))
    }
}

/// What a successful command prints on stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub stdout: String,
}

fn json_outcome(v: &Value) -> Outcome {
    Outcome { stdout: serde_json::to_string_pretty(v).expect("json values serialize") }
}

pub fn run(cli: Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Predict { hurst, dim, format } => {
            let v = commands::predict(hurst, dim)?;
            Ok(match format {
                Format::Json => json_outcome(&v),
                Format::Text => {
                    let p = &v["prediction"];
                    let labels: Vec<&str> =
                        p["regimes"].as_array().into_iter().flatten().filter_map(Value::as_str).collect();
                    Outcome {
                        stdout: format!(
                            "H = {hurst}, d = {dim}: nu = {}, critical dimension = {}, regimes: {}",
                            p["nu"],
                            p["critical_dimension"],
                            labels.join(", ")
                        ),
                    }
                }
            })
        }
        Command::RegimeMap(a) => {
            let d = RegimeMapConfig::default();
            let cfg = RegimeMapConfig {
                h_min: a.h_min.unwrap_or(d.h_min),
                h_max: a.h_max.unwrap_or(d.h_max),
                d_min: a.d_min.unwrap_or(d.d_min),
                d_max: a.d_max.unwrap_or(d.d_max),
                resolution: a.resolution.unwrap_or(d.resolution),
                svg: !a.no_svg,
            };
            let mut out = OutDir::create(a.out_dir.unwrap_or_else(default_out_dir))?;
            Ok(json_outcome(&commands::regime_map(&cfg, &mut out)?))
        }
        Command::Simulate(a) => data_command(a, commands::simulate),
        Command::Sweep(a) => data_command(a, commands::sweep),
        Command::Invariance(a) => data_command(a, commands::invariance),
        Command::Slab(a) => data_command(a, commands::slab),
        Command::EpsScan(a) => data_command(a, commands::eps_scan),
        Command::Replay { manifest, out_dir } => {
            let dir = out_dir.unwrap_or_else(|| {
                manifest.parent().map(|p| p.join("replay")).unwrap_or_else(|| PathBuf::from("replay"))
            });
            let mut out = OutDir::create(dir)?;
            Ok(json_outcome(&commands::replay(&manifest, &mut out)?))
        }
    }
}

fn data_command(
    args: RunArgs,
    body: fn(&config::RunConfig, &mut OutDir) -> CliResult<Value>,
) -> CliResult<Outcome> {
    let cfg = config::resolve(args.config.as_deref(), args.overlay())?;
    let mut out = args.out_dir()?;
    Ok(json_outcome(&body(&cfg, &mut out)?))
}

/// Parse, run and report; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind::*;
            if matches!(e.kind(), DisplayHelp | DisplayVersion) {
                let _ = write!(std::io::stdout(), "{e}");
                return EXIT_OK;
            }
            eprintln!("{}", CliError::usage(e.render().to_string().trim_end()).to_json());
            return EXIT_USAGE;
        }
    };
    match run(cli) {
        Ok(outcome) => {
            // A closed pipe downstream is not a failure of the run.
            let _ = writeln!(std::io::stdout(), "{}", outcome.stdout);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code
        }
    }
}
