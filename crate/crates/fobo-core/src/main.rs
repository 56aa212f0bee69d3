use std::fs;
use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use fobo_core::cli::{self, ExperimentConfig};

/// First-order Bayesian optimization experiments: gradient-aware acquisition
/// strategies benchmarked against standard baselines on analytic test
/// functions.
#[derive(Parser)]
#[command(name = "fobo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured batch of optimization runs and write CSV artifacts.
    Run {
        /// Path to a `key = value` config file.
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (default: all available cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Override the configured benchmark.
        #[arg(long)]
        benchmark: Option<String>,
        /// Override the configured algorithms (comma-separated).
        #[arg(long)]
        algorithms: Option<String>,
        /// Override the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render mean-regret curves from summary files into an SVG.
    Plot {
        /// Output SVG path.
        #[arg(long, default_value = "regret.svg")]
        out: PathBuf,
        /// One or more summary.csv files produced by `run`.
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            jobs,
            benchmark,
            algorithms,
            seed,
            out,
        } => run_command(config, jobs, benchmark, algorithms, seed, out),
        Command::Plot { out, summaries } => {
            cli::plot_regret(&out, &summaries).map(|()| println!("wrote {}", out.display()))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run_command(
    config_path: PathBuf,
    jobs: Option<usize>,
    benchmark: Option<String>,
    algorithms: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), cli::CliError> {
    let content = fs::read_to_string(&config_path)?;
    let mut config = ExperimentConfig::parse(&content)?;
    if let Some(b) = benchmark {
        config.benchmark = cli::parse_benchmark(&b)?;
    }
    if let Some(a) = algorithms {
        config.algorithms = cli::parse_algorithms(&a)?;
    }
    if let Some(s) = seed {
        config.master_seed = s;
    }
    if let Some(o) = out {
        config.output_dir = o;
    }
    let jobs = jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(NonZeroUsize::get)
            .unwrap_or(1)
    });

    let started = Instant::now();
    let report = cli::run_experiment(&config, jobs)?;
    eprintln!(
        "finished in {:.2}s ({} rows, {} failed runs)",
        started.elapsed().as_secs_f64(),
        report.total_rows,
        report.failures
    );
    for file in &report.files {
        println!("wrote {}", file.display());
    }
    Ok(())
}
