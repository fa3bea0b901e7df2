//! Experiment runner for the robust ABC and synthetic-likelihood samplers.

pub mod config;
pub mod ingest;
pub mod report;
pub mod run;

pub use config::{load_config, parse_config, preset, Algorithm, ConfigError, ExperimentConfig};
pub use ingest::{ingest_returns_csv, IngestError};
pub use run::{execute, persist, run_experiment, RunError, RunOutput, RunReport};

/// Environment variable overriding the config seed.
pub const SEED_ENV: &str = "RABC_SEED";

/// `--seed` beats `RABC_SEED`, which beats the config file.
pub fn resolve_seed(config_seed: u64, env: Option<&str>, flag: Option<u64>) -> Result<u64, ConfigError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| ConfigError::new(SEED_ENV, format!("`{v}` is not an unsigned 64-bit integer"))),
        None => Ok(config_seed),
    }
}
