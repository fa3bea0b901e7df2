//! Replicated experiment execution and persistence.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rabc_core::abc::regression_adjust;
use rabc_core::bsl::rbsl_mh;
use rabc_core::diagnostics::{mc_metrics, randomization_location_test};
use rabc_core::models::{
    simulate_gaussian_mixture, simulate_gk, simulate_ma2, simulate_normal_location, simulate_stable_sv, simulate_sv,
};
use rabc_core::rabc::run_rabc;
use rabc_core::smc::smc_abc;
use rabc_core::summaries::{fit_garch_aux, sample_quantile, Autocovariances, GarchScore, MeanVariance, RobustQuantiles};
use rabc_core::{
    AbcProblem, BslConfig, BslVariant, Dataset, GammaPriorKind, McMetrics, PriorSpec, RabcSettings, RandomStream,
    SmcConfig, SummaryMap, SummaryVector, TraceRecord,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, DataSource, Dgp, ExperimentConfig, SummaryKind};
use crate::ingest::ingest_returns_csv;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot write CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot serialize report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Randomization-test result for one adjustment component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaTest {
    pub component: String,
    pub p_value: f64,
    pub rejected: bool,
}

/// Posterior summary of one parameter in one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub rep: usize,
    pub param: String,
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
    /// Whether the credible interval contains the configured target.
    pub covered: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub rep: usize,
    pub observed_summary: Vec<f64>,
    /// Auxiliary GARCH fit on the observed data (score summaries only).
    pub beta_hat: Option<[f64; 4]>,
    pub n_draws: usize,
    pub gamma_tests: Vec<GammaTest>,
    /// Tolerances (step one and final) for the ABC samplers.
    pub eps1: Option<f64>,
    pub eps_final: Option<f64>,
    pub acceptance_rate: Option<f64>,
    pub trace: Vec<TraceRecord>,
    pub warning: Option<String>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub rep: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamMetrics {
    pub param: String,
    pub target: f64,
    #[serde(flatten)]
    pub metrics: McMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub param_names: Vec<String>,
    pub gamma_labels: Vec<String>,
    pub metric_rows: Vec<MetricRow>,
    pub replications: Vec<ReplicationReport>,
    /// Fraction of successful replications rejecting each adjustment component.
    pub rejection_rates: Vec<(String, f64)>,
    pub mc_metrics: Option<Vec<ParamMetrics>>,
    pub failures: Vec<Failure>,
    pub total_seconds: f64,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn rejection_rate(&self, component: &str) -> Option<f64> {
        self.rejection_rates.iter().find(|(c, _)| c == component).map(|(_, r)| *r)
    }
}

/// Draws kept in memory for one replication.
#[derive(Clone, Debug)]
pub struct ReplicationDraws {
    pub theta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
}

pub struct RunOutput {
    pub report: RunReport,
    /// Per replication, `None` for failures.
    pub draws: Vec<Option<ReplicationDraws>>,
}

struct RepResult {
    report: ReplicationReport,
    draws: ReplicationDraws,
}

pub fn generate_data(dgp: &Dgp, n: usize, rng: &mut RandomStream) -> rabc_core::Result<Dataset> {
    match dgp {
        Dgp::Normal { theta, sigma } => simulate_normal_location(*theta, *sigma, n, rng),
        Dgp::Mixture(m) => simulate_gaussian_mixture(m, n, rng),
        Dgp::Gk(p) => simulate_gk(p, n, rng),
        Dgp::Ma2 { theta1, theta2 } => simulate_ma2(*theta1, *theta2, n, rng),
        Dgp::Sv(p) => simulate_sv(p, n, rng),
        Dgp::StableSv(p) => simulate_stable_sv(p, n, rng),
    }
}

fn summary_map(kind: SummaryKind, y: &Dataset) -> rabc_core::Result<(Box<dyn SummaryMap>, Option<[f64; 4]>)> {
    Ok(match kind {
        SummaryKind::MeanVariance => (Box::new(MeanVariance), None),
        SummaryKind::Autocovariances => (Box::new(Autocovariances), None),
        SummaryKind::RobustQuantiles => (Box::new(RobustQuantiles), None),
        SummaryKind::GarchScore => {
            let beta_hat = fit_garch_aux(y)?;
            (Box::new(GarchScore { beta_hat }), Some(beta_hat.to_array()))
        }
    })
}

fn smc_config(cfg: &ExperimentConfig) -> SmcConfig {
    let s = &cfg.settings;
    SmcConfig {
        n: s.n,
        alpha: s.alpha,
        p_acc_min: s.p_acc_min,
        r_init: s.r_init,
        c_moves: s.c_moves,
        proposal_scale: s.proposal_scale,
        max_iterations: s.max_iterations,
        ..SmcConfig::default()
    }
}

fn bsl_variant(alg: Algorithm) -> Option<BslVariant> {
    match alg {
        Algorithm::Bsl => Some(BslVariant::Plain),
        Algorithm::RbslM => Some(BslVariant::MeanAdjust),
        Algorithm::RbslV => Some(BslVariant::VarianceAdjust),
        _ => None,
    }
}

/// Adjustment prior used both by the sampler and as the randomization-test reference.
fn gamma_prior(cfg: &ExperimentConfig) -> Option<PriorSpec> {
    let s = &cfg.settings;
    match cfg.algorithm {
        Algorithm::RabcLaplace => Some(PriorSpec::Laplace { location: 0.0, scale: s.lambda }),
        Algorithm::RabcSpikeSlab => Some(PriorSpec::SpikeSlab { p: s.p, scale: s.lambda }),
        alg => bsl_variant(alg).and_then(|v| s.bsl_gamma_prior.or(v.default_gamma_prior())),
    }
}

/// Labels of the adjustment components, in draw-column order.
pub fn gamma_labels(cfg: &ExperimentConfig, summary_labels: &[String]) -> Vec<String> {
    let dim = summary_labels.len();
    match cfg.algorithm {
        a if a.is_rabc() => {
            let part = cfg.partition().expect("validated partition");
            part.phi().iter().map(|&i| format!("gamma_{}", summary_labels[i])).collect()
        }
        Algorithm::RbslM | Algorithm::RbslV => (0..dim).map(|i| format!("gamma_{}", summary_labels[i])).collect(),
        _ => Vec::new(),
    }
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = if x.len() > 1 { x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, v.sqrt())
}

/// Per-parameter posterior summaries for one replication.
pub fn metric_rows(
    rep: usize,
    theta: &[Vec<f64>],
    names: &[String],
    level: f64,
    target: Option<&[f64]>,
) -> Vec<MetricRow> {
    let tail = (1.0 - level) / 2.0;
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut col: Vec<f64> = theta.iter().map(|r| r[j]).collect();
            let (mean, std) = mean_std(&col);
            col.sort_unstable_by(f64::total_cmp);
            let (lower, upper) = (sample_quantile(&col, tail), sample_quantile(&col, 1.0 - tail));
            MetricRow {
                rep,
                param: name.clone(),
                mean,
                std,
                lower,
                upper,
                covered: target.map(|t| lower <= t[j] && t[j] <= upper),
            }
        })
        .collect()
}

fn run_replication(cfg: &ExperimentConfig, rep: usize, csv_data: Option<&Dataset>) -> Result<RepResult, String> {
    let start = Instant::now();
    let root = RandomStream::new(cfg.seed).substream(rep as u64);
    let y = match (csv_data, cfg.data.as_ref()) {
        (Some(d), _) => d.clone(),
        (None, Some(DataSource::Synthetic { dgp, n })) => {
            generate_data(dgp, *n, &mut root.substream(0)).map_err(|e| format!("data generation: {e}"))?
        }
        _ => return Err("no data source".into()),
    };
    let (map, beta_hat) = summary_map(cfg.summary_kind(), &y).map_err(|e| format!("summary map: {e}"))?;
    let observed: SummaryVector = map.summarize(&y).map_err(|e| format!("observed summaries: {e}"))?;
    let prior = cfg.joint_prior();
    let sim = cfg.model.simulator();
    let problem = AbcProblem::new(&prior, sim.as_ref(), map.as_ref(), &observed).map_err(|e| e.to_string())?;
    let alg_rng = root.substream(1);
    let s = &cfg.settings;

    let mut eps1 = None;
    let mut eps_final = None;
    let mut acceptance_rate = None;
    let mut trace = Vec::new();
    let (theta, gamma, warning) = match cfg.algorithm {
        Algorithm::AbcSmc | Algorithm::AbcSmcReg => {
            let out = smc_abc(&problem, &smc_config(cfg), &alg_rng).map_err(|e| e.to_string())?;
            eps_final = Some(out.set.epsilon);
            trace = out.trace;
            let set = if cfg.algorithm == Algorithm::AbcSmcReg {
                regression_adjust(&out.set, &observed).map_err(|e| e.to_string())?
            } else {
                out.set
            };
            (set.thetas(), Vec::new(), out.warning)
        }
        Algorithm::RabcLaplace | Algorithm::RabcSpikeSlab => {
            let gamma_prior = match cfg.algorithm {
                Algorithm::RabcLaplace => GammaPriorKind::Laplace { scale: s.lambda },
                _ => GammaPriorKind::SpikeSlab { p: s.p, lambda: s.lambda },
            };
            let settings =
                RabcSettings {
                    n1: s.n1,
                    retain_fraction: s.retain_fraction,
                    step_one_tolerance: s.step_one_tolerance,
                    gamma_prior,
                    smc: smc_config(cfg),
                };
            let part = cfg.partition().map_err(|e| e.to_string())?;
            let out = run_rabc(&problem, &part, &settings, &alg_rng).map_err(|e| e.to_string())?;
            eps1 = Some(out.eps1);
            eps_final = Some(out.eps2_final);
            trace = out.trace;
            (out.theta_draws, out.gamma_draws, out.warning)
        }
        alg => {
            let variant = bsl_variant(alg).expect("synthetic-likelihood algorithm");
            let bsl_cfg = BslConfig {
                m: s.m,
                iters: s.iters,
                burnin: s.burnin,
                thin: s.thin,
                theta_step: s.theta_step.clone(),
                gamma_step: s.gamma_step,
                adapt_every: s.adapt_every,
            };
            let init = s.init_theta.clone().unwrap_or_else(|| prior.components.iter().map(PriorSpec::mean).collect());
            let out = rbsl_mh(variant, gamma_prior(cfg), &problem, &bsl_cfg, &init, &alg_rng)
                .map_err(|e| e.to_string())?;
            acceptance_rate = Some(out.acceptance_rate);
            (out.theta_draws, out.gamma_draws, out.warning)
        }
    };
    if let Some(w) = &warning {
        warn!("replication {rep}: {w}");
    }

    let labels = gamma_labels(cfg, observed.labels());
    let mut gamma_tests = Vec::with_capacity(labels.len());
    if let Some(gp) = gamma_prior(cfg) {
        let test_rng = root.substream(2);
        for (j, label) in labels.iter().enumerate() {
            let col: Vec<f64> = gamma.iter().map(|g| g[j]).collect();
            let p = randomization_location_test(&col, &gp, None, s.n_perm, &test_rng.substream(j as u64))
                .map_err(|e| format!("randomization test for {label}: {e}"))?;
            gamma_tests.push(GammaTest { component: label.clone(), p_value: p, rejected: p < s.test_level });
        }
    }
    let report = ReplicationReport {
        rep,
        observed_summary: observed.values().to_vec(),
        beta_hat,
        n_draws: theta.len(),
        gamma_tests,
        eps1,
        eps_final,
        acceptance_rate,
        trace,
        warning,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(RepResult { report, draws: ReplicationDraws { theta, gamma } })
}

/// Runs every replication without touching the filesystem except to read CSV data.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let start = Instant::now();
    let csv_data = match &cfg.data {
        Some(DataSource::Csv { path, column }) => Some(ingest_returns_csv(path, column)?),
        _ => None,
    };
    let run = || -> Vec<Result<RepResult, String>> {
        (0..cfg.replications).into_par_iter().map(|r| run_replication(cfg, r, csv_data.as_ref())).collect()
    };
    let results = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new().num_threads(w).build()?.install(run),
        None => run(),
    };

    let param_names = cfg.model.simulator().param_names();
    let summary_labels = summary_labels(cfg.summary_kind());
    let gamma_labels = gamma_labels(cfg, &summary_labels);
    let level = cfg.settings.credible_level;
    let mut metric_rows = Vec::new();
    let mut replications = Vec::new();
    let mut failures = Vec::new();
    let mut draws = Vec::new();
    for (rep, res) in results.into_iter().enumerate() {
        match res {
            Ok(r) => {
                metric_rows.extend(metric_rows_for(rep, &r.draws.theta, &param_names, level, cfg.pseudo_true.as_deref()));
                replications.push(r.report);
                draws.push(Some(r.draws));
            }
            Err(error) => {
                warn!("replication {rep} failed: {error}");
                failures.push(Failure { rep, error });
                draws.push(None);
            }
        }
    }
    let rejection_rates = gamma_labels
        .iter()
        .enumerate()
        .map(|(j, label)| {
            let hits = replications.iter().filter(|r| r.gamma_tests[j].rejected).count();
            (label.clone(), hits as f64 / replications.len().max(1) as f64)
        })
        .collect();
    let mc = cfg.pseudo_true.as_ref().and_then(|target| {
        let reps: Vec<Vec<Vec<f64>>> = draws.iter().flatten().map(|d| d.theta.clone()).collect();
        match mc_metrics(&reps, target, level) {
            Ok(m) => Some(
                m.into_iter()
                    .zip(&param_names)
                    .zip(target)
                    .map(|((metrics, param), &target)| ParamMetrics { param: param.clone(), target, metrics })
                    .collect(),
            ),
            Err(e) => {
                info!("Monte Carlo metrics skipped: {e}");
                None
            }
        }
    });
    let report = RunReport {
        config: cfg.clone(),
        param_names,
        gamma_labels,
        metric_rows,
        replications,
        rejection_rates,
        mc_metrics: mc,
        failures,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { report, draws })
}

fn metric_rows_for(rep: usize, theta: &[Vec<f64>], names: &[String], level: f64, target: Option<&[f64]>) -> Vec<MetricRow> {
    if theta.is_empty() {
        return Vec::new();
    }
    metric_rows(rep, theta, names, level, target)
}

fn summary_labels(kind: SummaryKind) -> Vec<String> {
    let labels = match kind {
        SummaryKind::MeanVariance => MeanVariance.labels(),
        SummaryKind::Autocovariances => Autocovariances.labels(),
        SummaryKind::RobustQuantiles => RobustQuantiles.labels(),
        SummaryKind::GarchScore => {
            GarchScore { beta_hat: rabc_core::summaries::AuxGarchParams::from_array([0.1, 0.1, 0.8, 5.0]) }.labels()
        }
    };
    labels.to_vec()
}

pub const DRAWS_FILE: &str = "draws.csv";
pub const GAMMA_FILE: &str = "gamma_draws.csv";
pub const REPORT_FILE: &str = "report.json";

/// Writes `draws.csv`, `gamma_draws.csv` (when there are adjustment components) and `report.json`.
pub fn persist(output: &RunOutput, dir: &Path) -> Result<(), RunError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let report = &output.report;
    write_long_csv(&dir.join(DRAWS_FILE), "param", &report.param_names, output.draws.iter().map(|d| d.as_ref().map(|d| &d.theta)))?;
    if !report.gamma_labels.is_empty() {
        write_long_csv(
            &dir.join(GAMMA_FILE),
            "component",
            &report.gamma_labels,
            output.draws.iter().map(|d| d.as_ref().map(|d| &d.gamma)),
        )?;
    }
    let path = dir.join(REPORT_FILE);
    let mut f = fs::File::create(&path).map_err(io(&path))?;
    serde_json::to_writer_pretty(&mut f, report)?;
    f.write_all(b"\n").map_err(io(&path))?;
    Ok(())
}

fn write_long_csv<'a>(
    path: &Path,
    key: &str,
    names: &[String],
    reps: impl Iterator<Item = Option<&'a Vec<Vec<f64>>>>,
) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rep", key, "draw_index", "value"])?;
    for (rep, draws) in reps.enumerate() {
        let Some(draws) = draws else { continue };
        let rep = rep.to_string();
        for (j, name) in names.iter().enumerate() {
            for (i, row) in draws.iter().enumerate() {
                w.write_record([rep.as_str(), name, &i.to_string(), &row[j].to_string()])?;
            }
        }
    }
    w.flush().map_err(|source| RunError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

/// Executes and persists; the report is returned even when replications failed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
    let output = execute(cfg)?;
    persist(&output, &cfg.output_dir)?;
    Ok(output.report)
}
