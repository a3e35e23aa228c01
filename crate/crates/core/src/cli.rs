//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 usage, 3 validation or I/O, 4 sampler abort.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::abc::{rejection_sample, Execution, RejectionConfig};
use crate::error::{Error, Result};
use crate::io::output::{
    ensure_dir, posterior_outputs, read_latest_population, write_config_echo, write_population,
    write_posterior, write_rejection_stats, write_trace, CONFIG_ECHO_FILE, TRACE_FILE,
};
use crate::io::scenario::write_truth;
use crate::io::{
    generate_scenario, load_dataset, write_dataset, NoiseModel, RunConfig, RunMode, ScenarioSpec,
};
use crate::smc::run_adaptive_with;

#[derive(Debug, Parser)]
#[command(
    name = "plume-abc",
    version,
    about = "Multi-model ABC source localisation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset and its ground truth.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// Lognormal noise level; 0 disables noise.
        #[arg(long)]
        noise_sigma: Option<f64>,
    },
    /// Run the adaptive sampler.
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Plain rejection sampling at a fixed tolerance.
    Reject {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Recompute posterior files from a finished run directory.
    Summarise {
        /// Run directory holding population files and `config_echo.toml`.
        #[arg(long)]
        run: PathBuf,
        /// Where to write the summaries (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    phi_fraction: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Comma-separated model numbers, e.g. `1,2,3`.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<u8>>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate proposals on all cores. Results are unchanged.
    #[arg(long)]
    parallel: bool,
}

impl CommonArgs {
    fn into_config(self, mode: RunMode) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.mode = mode;
        if self.dataset.is_some() {
            cfg.dataset = self.dataset;
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if let Some(n) = self.n {
            cfg.smc.n = n;
        }
        if let Some(v) = self.lambda {
            cfg.smc.lambda = v;
        }
        if let Some(v) = self.delta {
            cfg.smc.delta = v;
        }
        if let Some(v) = self.phi_fraction {
            cfg.smc.phi_fraction = v;
        }
        if let Some(v) = self.max_iterations {
            cfg.smc.max_iterations = v;
        }
        if let Some(models) = self.models {
            cfg.models = models;
        }
        if self.out.is_some() {
            cfg.out = self.out;
        }
        if self.parallel {
            cfg.smc.execution = Execution::Parallel;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| {
        Error::Usage(format!(
            "missing {what} (--{what} or `{what}` in the config)"
        ))
    })
}

fn dataset_path(cfg: &RunConfig) -> Result<&Path> {
    let path = required(&cfg.dataset, "dataset")?;
    if !path.is_file() {
        return Err(Error::Usage(format!(
            "dataset {} not found",
            path.display()
        )));
    }
    Ok(path)
}

fn generate(mut cfg: RunConfig, noise_sigma: Option<f64>) -> Result<()> {
    let seed = cfg.seed()?;
    let out = required(&cfg.out, "out")?.to_path_buf();
    let mut spec = cfg
        .scenario
        .take()
        .unwrap_or_else(|| ScenarioSpec::water_channel(NoiseModel::Lognormal { sigma: 0.3 }));
    if let Some(sigma) = noise_sigma {
        spec.noise = if sigma == 0.0 {
            NoiseModel::None
        } else {
            NoiseModel::Lognormal { sigma }
        };
    }
    let generated = generate_scenario(&spec, seed)?;
    ensure_dir(&out)?;
    write_dataset(&out.join("dataset.csv"), &generated.array)?;
    write_truth(&out.join("truth.csv"), &generated.truth)?;
    cfg.scenario = Some(spec);
    write_config_echo(&out, &cfg)
}

fn run(cfg: RunConfig) -> Result<()> {
    let seed = cfg.seed()?;
    let out = required(&cfg.out, "out")?.to_path_buf();
    let array = load_dataset(dataset_path(&cfg)?)?;
    let priors = cfg.resolve_priors()?;
    let models = priors.enabled_models();
    ensure_dir(&out)?;
    write_config_echo(&out, &cfg.resolved(&priors))?;

    let trace_path = out.join(TRACE_FILE);
    let mut records = Vec::new();
    let result = run_adaptive_with(&array, &priors, &cfg.smc, seed, |pop, rec| {
        write_population(&out, pop, &models)?;
        records.push(rec.clone());
        write_trace(&trace_path, &records)
    })?;
    if result.trace.cap_reached {
        log::warn!("stopped at max_iterations = {}", cfg.smc.max_iterations);
    }
    info!(
        "finished after {} iterations, final tolerance {:e}, mean acceptance {:.4}",
        result.population.iteration,
        result.population.tolerance,
        result.trace.average_acceptance_rate()
    );
    let outputs = posterior_outputs(&result.population, &priors, cfg.grid_points)?;
    write_posterior(&out, &outputs)
}

fn reject(cfg: RunConfig) -> Result<()> {
    let seed = cfg.seed()?;
    let out = required(&cfg.out, "out")?.to_path_buf();
    let epsilon = cfg
        .epsilon
        .ok_or_else(|| Error::Usage("reject needs --epsilon".into()))?;
    let array = load_dataset(dataset_path(&cfg)?)?;
    let priors = cfg.resolve_priors()?;
    ensure_dir(&out)?;
    write_config_echo(&out, &cfg.resolved(&priors))?;
    let config = RejectionConfig {
        guard: cfg.smc.guard,
        execution: cfg.smc.execution,
    };
    let result = rejection_sample(&array, &priors, epsilon, cfg.smc.n, seed, &config)?;
    write_population(&out, &result.population, &priors.enabled_models())?;
    write_rejection_stats(
        &out.join("rejection.csv"),
        epsilon,
        cfg.smc.n,
        &result.stats,
    )?;
    let outputs = posterior_outputs(&result.population, &priors, cfg.grid_points)?;
    write_posterior(&out, &outputs)
}

fn summarise_dir(run_dir: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(&run_dir.join(CONFIG_ECHO_FILE))?;
    let priors = cfg.resolve_priors()?;
    let pop = read_latest_population(run_dir, f64::NAN)?;
    let outputs = posterior_outputs(&pop, &priors, cfg.grid_points)?;
    ensure_dir(out)?;
    write_posterior(out, &outputs)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            common,
            noise_sigma,
        } => generate(common.into_config(RunMode::Generate)?, noise_sigma),
        Command::Run { common } => run(common.into_config(RunMode::Run)?),
        Command::Reject { common, epsilon } => {
            let mut cfg = common.into_config(RunMode::Reject)?;
            if epsilon.is_some() {
                cfg.epsilon = epsilon;
            }
            reject(cfg)
        }
        Command::Summarise { run, out } => {
            let out = out.unwrap_or_else(|| run.clone());
            summarise_dir(&run, &out)
        }
    }
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
