//! Misspecification diagnostics and Monte Carlo benchmark metrics.

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::AbcProblem;
use crate::distributions::{JointPrior, PriorSpec};
use crate::error::{Error, Result};
use crate::models::Simulator;
use crate::random::RandomStream;
use crate::summaries::{sample_quantile, SummaryMap, SummaryVector};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Two-sample permutation test on |mean(a) − mean(b)| with the add-one correction.
pub fn randomization_test(a: &[f64], b: &[f64], n_perm: usize, rng: &mut RandomStream) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("randomization test needs two non-empty samples"));
    }
    if n_perm < 999 {
        return Err(Error::config(format!("need at least 999 permutations, got {n_perm}")));
    }
    let observed = (mean(a) - mean(b)).abs();
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let total: f64 = pooled.iter().sum();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut exceed = 0usize;
    for _ in 0..n_perm {
        pooled.shuffle(rng);
        let sa: f64 = pooled[..a.len()].iter().sum();
        let diff = (sa / na - (total - sa) / nb).abs();
        // Relative slack so ties with the observed statistic survive summation order.
        if diff >= observed - 1e-12 * observed.abs().max(1e-300) {
            exceed += 1;
        }
    }
    Ok((1 + exceed) as f64 / (n_perm + 1) as f64)
}

/// Compare posterior draws of one adjustment component with a fresh prior sample of size
/// `n_prior` (the posterior size when `None`).
pub fn randomization_location_test(
    posterior: &[f64],
    prior: &PriorSpec,
    n_prior: Option<usize>,
    n_perm: usize,
    rng: &RandomStream,
) -> Result<f64> {
    if posterior.is_empty() {
        return Err(Error::domain("no posterior draws"));
    }
    prior.validate()?;
    let n = n_prior.unwrap_or(posterior.len());
    if n == 0 {
        return Err(Error::domain("prior sample size must be positive"));
    }
    let mut r = rng.substream(0);
    let reference: Vec<f64> = (0..n).map(|_| prior.sample_unchecked(&mut r)).collect();
    randomization_test(posterior, &reference, n_perm, &mut rng.substream(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveCheck {
    pub summaries: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Whether each observed summary lies inside its predictive band.
    pub inside: Vec<bool>,
}

/// Per-summary predictive band `[q, 1 − q]` and inclusion of the observed value.
pub fn predictive_band(predictive: &[Vec<f64>], observed: &[f64], tail: f64) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let d = observed.len();
    let mut lower = Vec::with_capacity(d);
    let mut upper = Vec::with_capacity(d);
    let mut inside = Vec::with_capacity(d);
    for j in 0..d {
        let mut col: Vec<f64> = predictive.iter().map(|s| s[j]).collect();
        col.sort_unstable_by(f64::total_cmp);
        let (lo, hi) = (sample_quantile(&col, tail), sample_quantile(&col, 1.0 - tail));
        lower.push(lo);
        upper.push(hi);
        inside.push(lo <= observed[j] && observed[j] <= hi);
    }
    (lower, upper, inside)
}

/// One fresh simulation at each of `n_draws_used` randomly chosen posterior rows, with a
/// [0.5%, 99.5%] band check against the observed summaries.
pub fn posterior_predictive_summaries(
    theta_draws: &[Vec<f64>],
    problem: &AbcProblem,
    n_draws_used: usize,
    rng: &RandomStream,
) -> Result<PredictiveCheck> {
    if theta_draws.is_empty() || n_draws_used == 0 {
        return Err(Error::domain("posterior predictive check needs draws"));
    }
    let summaries: Vec<Vec<f64>> = (0..n_draws_used)
        .into_par_iter()
        .filter_map(|i| {
            let mut r = rng.substream(i as u64);
            let theta = &theta_draws[r.random_range(0..theta_draws.len())];
            match problem.simulate_summary(theta, &mut r) {
                Ok(s) => Some(s.values().to_vec()),
                Err(e) => {
                    warn!("predictive draw {i} failed: {e}");
                    None
                }
            }
        })
        .collect();
    if summaries.is_empty() {
        return Err(Error::Run { failed: n_draws_used, total: n_draws_used });
    }
    let (lower, upper, inside) = predictive_band(&summaries, problem.observed.values(), 0.005);
    Ok(PredictiveCheck { summaries, labels: problem.observed.labels().to_vec(), lower, upper, inside })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub theta: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// For each prior draw, the mean and std of every summary across `n_reps` datasets.
pub fn partition_probe(
    prior: &JointPrior,
    simulator: &dyn Simulator,
    summaries: &dyn SummaryMap,
    n_param_draws: usize,
    n_reps: usize,
    rng: &RandomStream,
) -> Result<Vec<ProbeRow>> {
    if n_reps < 2 {
        return Err(Error::config(format!("partition probe needs at least 2 replicates, got {n_reps}")));
    }
    let rows: Vec<Option<ProbeRow>> = (0..n_param_draws)
        .into_par_iter()
        .map(|i| {
            let stream = rng.substream(i as u64);
            let theta = prior.sample(&mut stream.substream(0));
            let mut sims: Vec<SummaryVector> = Vec::with_capacity(n_reps);
            for k in 0..n_reps {
                let mut r = stream.substream(k as u64 + 1);
                match simulator.simulate(&theta, &mut r).and_then(|z| summaries.summarize(&z)) {
                    Ok(s) => sims.push(s),
                    Err(e) => warn!("probe row {i}, replicate {k}: {e}"),
                }
            }
            if sims.len() < 2 {
                return None;
            }
            let d = summaries.dim();
            let cols: Vec<Vec<f64>> = (0..d).map(|j| sims.iter().map(|s| s.values()[j]).collect()).collect();
            Some(ProbeRow {
                theta,
                mean: cols.iter().map(|c| mean(c)).collect(),
                std: cols.iter().map(|c| sample_std(c)).collect(),
            })
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McMetrics {
    /// Percentage of replications whose credible interval contains the target.
    pub coverage: f64,
    pub bias: f64,
    pub avg_posterior_std: f64,
    pub intervals: Vec<(f64, f64)>,
}

/// Coverage, bias and average posterior std per coordinate across replications.
pub fn mc_metrics(replications: &[Vec<Vec<f64>>], theta_star: &[f64], level: f64) -> Result<Vec<McMetrics>> {
    if replications.len() < 2 {
        return Err(Error::config("Monte Carlo metrics need at least 2 replications"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config(format!("credible level {level} outside (0, 1)")));
    }
    if replications.iter().any(|r| r.is_empty() || r.iter().any(|row| row.len() != theta_star.len())) {
        return Err(Error::config("every replication needs draws matching the target dimension"));
    }
    let tail = (1.0 - level) / 2.0;
    let reps = replications.len() as f64;
    Ok((0..theta_star.len())
        .map(|j| {
            let (mut hits, mut bias, mut sd) = (0usize, 0.0, 0.0);
            let mut intervals = Vec::with_capacity(replications.len());
            for draws in replications {
                let mut col: Vec<f64> = draws.iter().map(|row| row[j]).collect();
                bias += mean(&col) - theta_star[j];
                sd += sample_std(&col);
                col.sort_unstable_by(f64::total_cmp);
                let iv = (sample_quantile(&col, tail), sample_quantile(&col, 1.0 - tail));
                if iv.0 <= theta_star[j] && theta_star[j] <= iv.1 {
                    hits += 1;
                }
                intervals.push(iv);
            }
            McMetrics {
                coverage: 100.0 * hits as f64 / reps,
                bias: bias / reps,
                avg_posterior_std: sd / reps,
                intervals,
            }
        })
        .collect())
}
