mod commands;
mod config;
mod error;
mod io;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fmsv_core::samplers::Scheme;
use fmsv_core::{LoadingPrior, Parallelism};

use crate::config::RunConfig;
use crate::error::CliError;

/// Simulate, fit and diagnose factor stochastic volatility models with leverage.
#[derive(Parser)]
#[command(name = "fmsv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a panel from the model.
    Simulate {
        #[command(flatten)]
        opts: Opts,
    },
    /// Run the posterior sampler on a CSV panel (T rows, one column per series).
    Fit {
        data: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// IACT, TNV and DIC tables plus SVG plots for one or more fit directories.
    Diagnose {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Latent paths written by `simulate`, overlaid on the volatility plots.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value = "diagnostics")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    Normal,
    Ng,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Pg,
    Pgas,
    Mixed,
}

#[derive(Args)]
struct Opts {
    /// Config file (TOML), or a manifest from a previous run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    factors: Option<usize>,
    #[arg(long, value_enum)]
    prior: Option<PriorArg>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Opts {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => RunConfig::default(),
        };
        let s = &mut cfg.sampler;
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.scheme {
            s.scheme = match v {
                SchemeArg::Pg => Scheme::Pg,
                SchemeArg::Pgas => Scheme::Pgas,
                SchemeArg::Mixed => Scheme::Mixed,
            };
        }
        if let Some(v) = self.particles {
            s.particles = v;
        }
        if let Some(v) = self.iters {
            s.iters = v;
        }
        if let Some(v) = self.burnin {
            s.burnin = v;
        }
        match (self.prior, s.prior) {
            (Some(PriorArg::Normal), LoadingPrior::NormalGamma { .. }) => s.prior = LoadingPrior::default(),
            (Some(PriorArg::Ng), LoadingPrior::Normal { .. }) => {
                s.prior = LoadingPrior::NormalGamma { a: 0.5, c: 1.0, d: 1.0 }
            }
            _ => {}
        }
        if let Some(v) = self.factors {
            cfg.factors = v;
        }
        cfg.sampler.parallelism = parallelism()?;
        Ok(cfg)
    }
}

/// Applies the `FMSV_THREADS` cap to the worker pool.
fn parallelism() -> Result<Parallelism, CliError> {
    let Ok(raw) = std::env::var("FMSV_THREADS") else { return Ok(Parallelism::default()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("FMSV_THREADS must be a positive integer (got '{raw}')")))?;
    if n == 1 {
        return Ok(Parallelism::Sequential);
    }
    // Fails only if the pool already exists, which cannot happen before a command runs.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Parallelism::default())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { opts } => commands::simulate(&opts.resolve()?, &opts.out),
        Command::Fit { data, opts } => commands::fit(&data, &opts.resolve()?, &opts.out),
        Command::Diagnose { runs, truth, out } => {
            let table = commands::diagnose(&runs, &out, truth.as_deref())?;
            print!("{table}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
