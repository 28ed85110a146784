//! Command implementations behind the `noisytrack` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use noisytrack::config::{ConfigError, GainResolution, ResolvedConfig, RunConfig};
use noisytrack::experiment::{convergence_metrics, paper_scenario, run_ensemble, MetricOptions};
use noisytrack::sim::{run_trial, SimMode};
use noisytrack::spectral::{certify, min_real_part, min_symmetric_eigenvalue, EIG_TOL};
use noisytrack::topology::{build_coupling, is_balanced, is_globally_reachable};
use noisytrack::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_SCHEMA: u8 = 1;
pub const EXIT_HYPOTHESIS: u8 = 2;
pub const EXIT_CERTIFICATE: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "noisytrack", version, about = "Leader-follower tracking with noisy measurements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report reachability, balance and positive stability per topology.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the gain certificate for the configured topologies.
    Gains {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run one trial and write `trajectory.csv`.
    Simulate(RunArgs),
    /// Run the ensemble and write `stats.csv` and `metrics.json`.
    Ensemble(RunArgs),
    /// Run the ensemble for the built-in three-follower example.
    Paper {
        #[command(flatten)]
        run: RunArgs,
        /// Print the preset configuration and exit.
        #[arg(long)]
        dump_config: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Error,
    Full,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Worker threads; does not change output.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Moving-average window (samples) for the monotone-decay metric.
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    /// Earliest window start counted by the monotone-decay metric
    /// (default 0, or 5 for `paper`).
    #[arg(long)]
    pub after: Option<f64>,
}

/// A failed command: exit code plus the message for stderr.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(EXIT_SCHEMA, format!("config error at {}: {}", e.pointer, e.message))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = exit_code(&e);
        Failure::new(code, e.to_string())
    }
}

/// Maps a core error to its outcome class.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidTopology(_)
        | Error::InvalidParameter(_)
        | Error::Dimension(_)
        | Error::Schedule(_)
        | Error::OutOfRange { .. } => EXIT_SCHEMA,
        Error::NotPositiveStable { .. } | Error::Numeric(_) => EXIT_HYPOTHESIS,
        Error::SwitchingCertificateUnavailable { .. } => EXIT_CERTIFICATE,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
    }
}

/// Result of a command: text for stdout and the exit code.
#[derive(Debug)]
pub struct Outcome {
    pub stdout: String,
    pub code: u8,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { stdout, code: EXIT_OK }
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

pub fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_SCHEMA, format!("cannot read {}: {e}", path.display())))?;
    Ok(RunConfig::from_json(&text)?)
}

#[derive(Debug, Serialize)]
pub struct TopologyReport {
    pub index: usize,
    pub reachable: bool,
    pub balanced: bool,
    pub positive_stable: bool,
    pub min_real_eigenvalue: f64,
    pub lambda_min_sym: f64,
}

#[derive(Debug, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    pub topologies: Vec<TopologyReport>,
    pub all_reachable: bool,
}

pub fn validate(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let resolved = cfg.resolve()?;
    let mut reports = Vec::new();
    for (index, topo) in resolved.topologies.iter().enumerate() {
        let h = build_coupling(topo).coupling;
        let min_re = min_real_part(&h)?;
        reports.push(TopologyReport {
            index,
            reachable: is_globally_reachable(topo),
            balanced: is_balanced(topo),
            positive_stable: min_re > EIG_TOL,
            min_real_eigenvalue: min_re,
            lambda_min_sym: min_symmetric_eigenvalue(std::iter::once(&h))?,
        });
    }
    let all_reachable = reports.iter().all(|r| r.reachable);
    let report = ValidationReport { n: resolved.n(), topologies: reports, all_reachable };
    Ok(Outcome { stdout: pretty(&report), code: if all_reachable { EXIT_OK } else { EXIT_HYPOTHESIS } })
}

#[derive(Debug, Serialize)]
struct UnavailableReport {
    mode: &'static str,
    available: bool,
    lambda_bar: f64,
    gamma: f64,
}

#[derive(Debug, Serialize)]
struct GainsReport<C: Serialize> {
    #[serde(flatten)]
    certificate: C,
    auto: bool,
}

pub fn gains(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let resolved = cfg.resolve()?;
    let couplings = resolved.couplings();
    let result = resolved.resolve_gain().and_then(|GainResolution { k, auto }| {
        let params = noisytrack::spectral::GainParameters::new(resolved.gamma, k)?;
        Ok((certify(&params, &couplings)?, auto))
    });
    match result {
        Ok((certificate, auto)) => Ok(Outcome::ok(pretty(&GainsReport { certificate, auto }))),
        Err(Error::SwitchingCertificateUnavailable { lambda_bar }) => Ok(Outcome {
            stdout: pretty(&UnavailableReport {
                mode: "switching",
                available: false,
                lambda_bar,
                gamma: resolved.gamma,
            }),
            code: EXIT_CERTIFICATE,
        }),
        Err(e) => Err(e.into()),
    }
}

fn apply_overrides(mut cfg: RunConfig, args: &RunArgs) -> RunConfig {
    if let Some(seed) = args.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(m) = args.trials {
        cfg.ensemble.trials = m;
    }
    if let Some(dt) = args.dt {
        cfg.integrator.dt = dt;
    }
    if let Some(t) = args.horizon {
        cfg.integrator.horizon = t;
    }
    if let Some(mode) = args.mode {
        cfg.integrator.mode = match mode {
            ModeArg::Error => SimMode::ErrorSystem,
            ModeArg::Full => SimMode::FullSystem,
        };
    }
    cfg
}

fn with_pool<T>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure>
where
    T: Send,
{
    match jobs {
        None => Ok(f()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Failure::new(EXIT_SCHEMA, format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::new(EXIT_SCHEMA, format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| Failure::new(EXIT_SCHEMA, format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn resolve_run(cfg: RunConfig, args: &RunArgs) -> Result<ResolvedConfig, Failure> {
    Ok(apply_overrides(cfg, args).resolve()?)
}

pub fn simulate(cfg: RunConfig, args: &RunArgs) -> Result<Outcome, Failure> {
    let resolved = resolve_run(cfg, args)?;
    let scenario = resolved.scenario()?;
    let outcome = run_trial(&scenario, &resolved.integrator, 0)?;
    let path = write_file(&args.out, "trajectory.csv", &outcome.record.to_csv())?;
    match outcome.diverged_at {
        Some(t) => Err(Failure::new(
            EXIT_DIVERGENCE,
            format!("trajectory diverged at t = {t}; partial record in {}", path.display()),
        )),
        None => Ok(Outcome::ok(format!("{}\n", path.display()))),
    }
}

pub fn ensemble(cfg: RunConfig, args: &RunArgs, default_after: f64) -> Result<Outcome, Failure> {
    let resolved = resolve_run(cfg, args)?;
    let ens = resolved.ensemble()?;
    let stats = with_pool(args.jobs, || run_ensemble(&ens))??;
    let opts = MetricOptions { window: args.window, after: args.after.unwrap_or(default_after) };
    let stats_path = write_file(&args.out, "stats.csv", &stats.to_csv())?;
    if stats.completed == 0 {
        return Err(Failure::new(EXIT_DIVERGENCE, format!("all {} trials diverged", stats.trials)));
    }
    let metrics = convergence_metrics(&stats, opts)?;
    let metrics_path = write_file(&args.out, "metrics.json", &pretty(&metrics))?;
    let listing = format!("{}\n{}\n", stats_path.display(), metrics_path.display());
    if stats.diverged.is_empty() {
        Ok(Outcome::ok(listing))
    } else {
        let first = &stats.diverged[0];
        Err(Failure::new(
            EXIT_DIVERGENCE,
            format!(
                "{} of {} trials diverged (first: trial {} at t = {}); statistics cover the rest",
                stats.diverged.len(),
                stats.trials,
                first.trial,
                first.t
            ),
        ))
    }
}

/// Monotone-decay metric start time for the built-in example.
pub const PAPER_METRIC_AFTER: f64 = 5.0;

pub fn run(cli: Cli) -> Result<Outcome, Failure> {
    match cli.command {
        Command::Validate { config } => validate(&load_config(&config)?),
        Command::Gains { config } => gains(&load_config(&config)?),
        Command::Simulate(args) => {
            let cfg = load_required(&args)?;
            simulate(cfg, &args)
        }
        Command::Ensemble(args) => {
            let cfg = load_required(&args)?;
            ensemble(cfg, &args, 0.0)
        }
        Command::Paper { run, dump_config } => {
            let cfg = match &run.config {
                Some(p) => load_config(p)?,
                None => paper_scenario(),
            };
            if dump_config {
                let mut s = apply_overrides(cfg, &run).to_json_pretty();
                s.push('\n');
                return Ok(Outcome::ok(s));
            }
            ensemble(cfg, &run, PAPER_METRIC_AFTER)
        }
    }
}

fn load_required(args: &RunArgs) -> Result<RunConfig, Failure> {
    match &args.config {
        Some(p) => load_config(p),
        None => Err(Failure::new(EXIT_SCHEMA, "--config is required")),
    }
}
