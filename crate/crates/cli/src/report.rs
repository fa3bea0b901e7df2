//! Summary tables regenerated from persisted draws.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rabc_core::diagnostics::mc_metrics;
use serde::Deserialize;

use crate::run::{metric_rows, MetricRow, RunError, RunReport, DRAWS_FILE, REPORT_FILE};

#[derive(Debug, Deserialize)]
struct DrawRow {
    rep: usize,
    param: String,
    draw_index: usize,
    value: f64,
}

/// Regroups `draws.csv` into per-replication draw matrices (rows are draws).
pub fn read_draws(path: &Path, names: &[String]) -> Result<BTreeMap<usize, Vec<Vec<f64>>>, RunError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: DrawRow = row?;
        let Some(j) = names.iter().position(|n| *n == row.param) else { continue };
        let draws = out.entry(row.rep).or_default();
        if draws.len() <= row.draw_index {
            draws.resize(row.draw_index + 1, vec![f64::NAN; names.len()]);
        }
        draws[row.draw_index][j] = row.value;
    }
    Ok(out)
}

pub fn load_report(dir: &Path) -> Result<RunReport, RunError> {
    let path = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|source| RunError::Io { path: path.clone(), source })?;
    Ok(serde_json::from_str(&text)?)
}

/// Text tables: per-replication posterior summaries, Monte Carlo metrics and rejection rates.
pub fn render_tables(dir: &Path) -> Result<String, RunError> {
    let report = load_report(dir)?;
    let draws = read_draws(&dir.join(DRAWS_FILE), &report.param_names)?;
    let cfg = &report.config;
    let level = cfg.settings.credible_level;
    let rows: Vec<MetricRow> = draws
        .iter()
        .flat_map(|(&rep, d)| metric_rows(rep, d, &report.param_names, level, cfg.pseudo_true.as_deref()))
        .collect();

    let mut s = String::new();
    let _ = writeln!(s, "{} ({}, {} replications, seed {})", cfg.name, cfg.algorithm.name(), cfg.replications, cfg.seed);
    let _ = writeln!(s, "\n{:>4}  {:<10} {:>10} {:>10} {:>10} {:>10}  covered", "rep", "param", "mean", "std", "lower", "upper");
    for r in &rows {
        let covered = r.covered.map_or("-", |c| if c { "yes" } else { "no" });
        let _ = writeln!(
            s,
            "{:>4}  {:<10} {:>10.4} {:>10.4} {:>10.4} {:>10.4}  {covered}",
            r.rep, r.param, r.mean, r.std, r.lower, r.upper
        );
    }
    if let Some(target) = &cfg.pseudo_true {
        let reps: Vec<Vec<Vec<f64>>> = draws.into_values().collect();
        if let Ok(m) = mc_metrics(&reps, target, level) {
            let _ = writeln!(s, "\n{:<10} {:>10} {:>10} {:>10} {:>10}", "param", "target", "cov %", "bias", "avg std");
            for ((name, t), m) in report.param_names.iter().zip(target).zip(m) {
                let _ = writeln!(s, "{name:<10} {t:>10.4} {:>10.1} {:>10.4} {:>10.4}", m.coverage, m.bias, m.avg_posterior_std);
            }
        }
    }
    if !report.rejection_rates.is_empty() {
        let _ = writeln!(s, "\nrejection rate at level {}:", cfg.settings.test_level);
        for (c, r) in &report.rejection_rates {
            let _ = writeln!(s, "  {c:<16} {r:.2}");
        }
    }
    if !report.failures.is_empty() {
        let _ = writeln!(s, "\nfailed replications:");
        for f in &report.failures {
            let _ = writeln!(s, "  {}: {}", f.rep, f.error);
        }
    }
    Ok(s)
}
