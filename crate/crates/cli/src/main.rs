//! `connmaint` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 runtime failure,
//! 3 validation failure.

mod commands;
mod output;
mod seeds;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};

use connmaint::sim::Execution;

use commands::{CliError, CliResult, Grid, SweepOptions};
use output::OutputDir;

#[derive(Parser, Debug)]
#[command(name = "connmaint", version, about = "Connectivity maintenance under communication failures and noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario per seed and write traces and metrics.
    Run(Common),
    /// Run every (p_fail, eta) cell of a grid for each seed.
    Sweep(SweepArgs),
    /// Write the control-effort spectrum of runs or of an existing trace.
    Spectrum(SpectrumArgs),
    /// Run the built-in property checks.
    Validate,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML scenario file; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Override a config entry, e.g. `--set disturbance.p_fail=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seeds: `7`, `1,4,9` or `1..20`. Defaults to the config's seed.
    #[arg(long, conflicts_with = "runs")]
    seeds: Option<String>,
    /// Shorthand for seeds 1..=N.
    #[arg(long)]
    runs: Option<u64>,
    /// Worker threads across runs; 1 runs sequentially. Defaults to all cores.
    #[arg(short, long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated failure probabilities.
    #[arg(long, value_name = "LIST")]
    p_fail: Option<String>,
    /// Comma-separated noise variances.
    #[arg(long, value_name = "LIST")]
    eta: Option<String>,
    /// p_fail = 0, 0.05, ..., 0.70 and eta = 0, 0.1, 0.3, 0.5, 1, 5.
    #[arg(long, conflicts_with_all = ["p_fail", "eta"])]
    full_grid: bool,
    /// Skip per-run trace files and keep only the summary.
    #[arg(long)]
    no_traces: bool,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[command(flatten)]
    common: Common,
    /// Analyze the `uc_norm` column of this trace CSV instead of running.
    #[arg(long, conflicts_with_all = ["config", "overrides", "seeds", "runs"])]
    trace: Option<PathBuf>,
}

fn usage(e: anyhow::Error) -> CliError {
    CliError::Usage(e)
}

fn resolve_seeds(common: &Common, default_seed: u64) -> CliResult<Vec<u64>> {
    match (&common.seeds, common.runs) {
        (Some(text), _) => seeds::parse_seeds(text).map_err(usage),
        (None, Some(n)) => seeds::seeds_from_count(n).map_err(usage),
        (None, None) => Ok(vec![default_seed]),
    }
}

fn execution(jobs: Option<usize>) -> CliResult<Execution> {
    match jobs {
        Some(0) => Err(usage(anyhow!("--jobs must be at least 1"))),
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            // Fails only if a pool already exists, which cannot happen here.
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Runtime(anyhow!(e)))?;
            Ok(Execution::Parallel)
        }
        None => Ok(Execution::Parallel),
    }
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = commands::load_config(common.config.as_deref(), &common.overrides)?;
            let seeds = resolve_seeds(&common, cfg.seed)?;
            let exec = execution(common.jobs)?;
            let out = OutputDir::create(&common.out).map_err(CliError::Runtime)?;
            commands::cmd_run(&cfg, &seeds, exec, &out, &command_line())
        }
        Command::Sweep(args) => {
            let common = &args.common;
            let cfg = commands::load_config(common.config.as_deref(), &common.overrides)?;
            let grid = if args.full_grid {
                Grid::full()
            } else {
                Grid {
                    p_fail: match &args.p_fail {
                        Some(s) => seeds::parse_list(s).map_err(usage)?,
                        None => vec![cfg.disturbance.p_fail],
                    },
                    eta: match &args.eta {
                        Some(s) => seeds::parse_list(s).map_err(usage)?,
                        None => vec![cfg.disturbance.eta],
                    },
                }
            };
            let seeds = resolve_seeds(common, cfg.seed)?;
            let exec = execution(common.jobs)?;
            let out = OutputDir::create(&common.out).map_err(CliError::Runtime)?;
            let options = SweepOptions {
                write_traces: !args.no_traces,
            };
            commands::cmd_sweep(&cfg, &grid, &seeds, exec, &options, &out, &command_line())
        }
        Command::Spectrum(args) => {
            let common = &args.common;
            let out = OutputDir::create(&common.out).map_err(CliError::Runtime)?;
            if let Some(trace) = &args.trace {
                return commands::cmd_spectrum_from_trace(trace, &out);
            }
            let cfg = commands::load_config(common.config.as_deref(), &common.overrides)?;
            let seeds = resolve_seeds(common, cfg.seed)?;
            let exec = execution(common.jobs)?;
            commands::cmd_spectrum(&cfg, &seeds, exec, &out, &command_line())
        }
        Command::Validate => commands::cmd_validate(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match &err {
                CliError::Usage(e) => eprintln!("error: {e:#}"),
                CliError::Runtime(e) => eprintln!("runtime failure: {e:#}"),
                CliError::Validation => eprintln!("validation failed"),
            }
            ExitCode::from(err.exit_code())
        }
    }
}
