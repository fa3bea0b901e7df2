use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rabc_cli::config::{Algorithm, PRESETS};
use rabc_cli::{load_config, preset, resolve_seed, run_experiment, SEED_ENV};

#[derive(Parser)]
#[command(name = "rabc", version, about = "Robust ABC and synthetic-likelihood experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a built-in preset.
    Run {
        #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_parser = PRESETS)]
        preset: Option<String>,
        /// Algorithm for a preset run.
        #[arg(long, requires = "preset", value_parser = Algorithm::ALL.map(Algorithm::name))]
        algorithm: Option<String>,
    },
    /// Print summary tables from a finished run's output directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, seed, out, workers, preset: preset_name, algorithm } => {
            let env_seed = std::env::var(SEED_ENV).ok();
            let loaded = match (&config, &preset_name) {
                (Some(path), _) => load_config(path),
                (None, Some(name)) => preset(name, algorithm.as_deref().and_then(Algorithm::parse), 0),
                (None, None) => unreachable!("clap requires --config or --preset"),
            };
            let mut cfg = match loaded {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            cfg.seed = match resolve_seed(cfg.seed, env_seed.as_deref(), seed) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            match run_experiment(&cfg) {
                Ok(report) => {
                    println!("wrote {}", cfg.output_dir.display());
                    if report.succeeded() {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("{} of {} replications failed", report.failures.len(), cfg.replications);
                        ExitCode::FAILURE
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Report { input } => match rabc_cli::report::render_tables(&input) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
