//! Command-line front end.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::experiment::{
    detect_git_commit, load_config, load_result, partition_histograms, run_experiment, write_result, ExperimentError,
    RunOptions, RunResult, SEED_PRESET,
};
use crate::report::{compare_runs, plot_data, write_comparison_csv, write_partition_csv, write_plot_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FAILED_CONVERGENCE: i32 = 3;
pub const EXIT_PROTOCOL_ABORT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "hybridfl", version, about = "Deterministic privacy-preserving federated learning benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a config file and print "valid".
    Validate { config: PathBuf },
    /// Run an experiment and write `<experiment_id>.json`.
    Run {
        config: PathBuf,
        /// Output directory, overriding `experiment.output_dir`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Seed override.
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// `preset` for 42,123,456, or a comma separated list.
        #[arg(long)]
        seeds: Option<String>,
        /// Print only the result file path(s).
        #[arg(long)]
        quiet: bool,
    },
    /// Aggregate result files and compare each configuration to a baseline.
    Compare {
        #[arg(required = true, num_args = 2..)]
        results: Vec<PathBuf>,
        /// Baseline experiment name or id.
        #[arg(long)]
        baseline: String,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Per-client class histograms of the federated partition.
    PartitionReport {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Accuracy, overhead and energy per run as CSV.
    PlotData {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Baseline name or id for the overhead factor; defaults to the first file.
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("--{flag}: {message}")]
    Usage { flag: &'static str, message: String },
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } | CliError::Experiment(ExperimentError::Config(_)) => EXIT_USAGE,
            _ => EXIT_ERROR,
        }
    }
}

pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, CliError> {
    if spec == "preset" {
        return Ok(SEED_PRESET.to_vec());
    }
    let seeds: Vec<u64> = spec
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage {
            flag: "seeds",
            message: format!("expected `preset` or a comma separated list of integers ({e})"),
        })?;
    if seeds.is_empty() {
        return Err(CliError::Usage {
            flag: "seeds",
            message: "no seeds given".into(),
        });
    }
    Ok(seeds)
}

fn check_exists(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(ExperimentError::Io {
            path: path.to_path_buf(),
            source: io::Error::new(io::ErrorKind::NotFound, "no such file"),
        }
        .into())
    }
}

fn sink(output: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match output {
        None => Ok(Box::new(io::stdout().lock())),
        Some(p) => File::create(p)
            .map(|f| Box::new(f) as Box<dyn Write>)
            .map_err(|source| ExperimentError::Io {
                path: p.to_path_buf(),
                source,
            }
            .into()),
    }
}

fn load_results(paths: &[PathBuf]) -> Result<Vec<RunResult>, CliError> {
    paths
        .iter()
        .map(|p| load_result(p).map_err(CliError::from))
        .collect()
}

fn status_code(status: &str) -> i32 {
    match status {
        "failed_convergence" => EXIT_FAILED_CONVERGENCE,
        "protocol_abort" => EXIT_PROTOCOL_ABORT,
        _ => EXIT_OK,
    }
}

/// Executes a parsed command, writing human output to `out`.
pub fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let print_err = |e: io::Error| CliError::Output(e.to_string());
    match cli.command {
        Command::Validate { config } => {
            check_exists(&config)?;
            load_config(&config)?;
            writeln!(out, "valid").map_err(print_err)?;
            Ok(EXIT_OK)
        }
        Command::Run {
            config,
            output,
            seed,
            seeds,
            quiet,
        } => {
            check_exists(&config)?;
            let base = load_config(&config)?;
            let seeds = match (seed, seeds) {
                (Some(s), _) => vec![s],
                (None, Some(spec)) => parse_seeds(&spec)?,
                (None, None) => vec![base.experiment.seed],
            };
            let options = RunOptions {
                git_commit: detect_git_commit(),
            };
            let mut code = EXIT_OK;
            for s in seeds {
                let mut cfg = base.clone();
                cfg.experiment.seed = s;
                let dir = output.clone().unwrap_or_else(|| cfg.experiment.output_dir.clone());
                let result = run_experiment(&cfg, &options)?;
                let path = write_result(&result, &dir)?;
                if quiet {
                    writeln!(out, "{}", path.display()).map_err(print_err)?;
                } else {
                    let r = &result.results;
                    writeln!(out, "{}", path.display()).map_err(print_err)?;
                    writeln!(out, "  seed: {s}").map_err(print_err)?;
                    writeln!(out, "  status: {}", r.status).map_err(print_err)?;
                    if let Some(reason) = &r.failure_reason {
                        writeln!(out, "  failure_reason: {reason}").map_err(print_err)?;
                    }
                    writeln!(out, "  accuracy: {:.4}  f1: {:.4}  mcc: {:.4}", r.accuracy, r.f1, r.mcc)
                        .map_err(print_err)?;
                    writeln!(out, "  result_hash: {}", result.reproducibility.result_hash).map_err(print_err)?;
                }
                code = code.max(status_code(&result.results.status));
            }
            Ok(code)
        }
        Command::Compare {
            results,
            baseline,
            output,
        } => {
            let runs = load_results(&results)?;
            let rows = compare_runs(&runs, &baseline).map_err(|e| match e {
                ExperimentError::MissingBaseline(_) => CliError::Usage {
                    flag: "baseline",
                    message: e.to_string(),
                },
                other => other.into(),
            })?;
            write_comparison_csv(sink(output.as_deref())?, &rows).map_err(|e| CliError::Output(e.to_string()))?;
            Ok(EXIT_OK)
        }
        Command::PartitionReport { config, seed, output } => {
            check_exists(&config)?;
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.experiment.seed = s;
            }
            let hist = partition_histograms(&cfg)?;
            write_partition_csv(sink(output.as_deref())?, &hist).map_err(|e| CliError::Output(e.to_string()))?;
            Ok(EXIT_OK)
        }
        Command::PlotData {
            results,
            baseline,
            output,
        } => {
            let runs = load_results(&results)?;
            let rows = plot_data(&runs, baseline.as_deref()).map_err(|e| match e {
                ExperimentError::MissingBaseline(_) => CliError::Usage {
                    flag: "baseline",
                    message: e.to_string(),
                },
                other => other.into(),
            })?;
            write_plot_csv(sink(output.as_deref())?, &rows).map_err(|e| CliError::Output(e.to_string()))?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut stdout = io::stdout().lock();
    match dispatch(cli, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
