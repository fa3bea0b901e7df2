//! Rejection ABC with reference-table retention, Euclidean distances, the Epanechnikov kernel,
//! and local-linear regression adjustment.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::distributions::JointPrior;
use crate::error::{Error, Result};
use crate::models::Simulator;
use crate::random::RandomStream;
use crate::summaries::{SummaryMap, SummaryVector};

/// Everything needed to simulate and compare summaries for one observed dataset.
#[derive(Clone, Copy)]
pub struct AbcProblem<'a> {
    pub prior: &'a JointPrior,
    pub simulator: &'a dyn Simulator,
    pub summaries: &'a dyn SummaryMap,
    pub observed: &'a SummaryVector,
}

impl<'a> AbcProblem<'a> {
    pub fn new(
        prior: &'a JointPrior,
        simulator: &'a dyn Simulator,
        summaries: &'a dyn SummaryMap,
        observed: &'a SummaryVector,
    ) -> Result<Self> {
        if prior.dim() != simulator.param_dim() {
            return Err(Error::config(format!(
                "prior has {} components but the model has {} parameters",
                prior.dim(),
                simulator.param_dim()
            )));
        }
        if observed.len() != summaries.dim() {
            return Err(Error::config(format!(
                "observed summary has length {} but the summary map produces {}",
                observed.len(),
                summaries.dim()
            )));
        }
        Ok(Self { prior, simulator, summaries, observed })
    }

    /// Simulate at `theta` and summarize.
    pub fn simulate_summary(&self, theta: &[f64], rng: &mut RandomStream) -> Result<SummaryVector> {
        let z = self.simulator.simulate(theta, rng)?;
        self.summaries.summarize(&z)
    }
}

/// One joint draw with its cached simulated summary and distances.
#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub theta: Vec<f64>,
    pub gamma: Option<Vec<f64>>,
    /// Distance on the matched block ψ.
    pub d1: Option<f64>,
    /// Primary selection distance.
    pub d2: f64,
    pub summary: SummaryVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub epsilon: f64,
    pub sorted: bool,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn thetas(&self) -> Vec<Vec<f64>> {
        self.particles.iter().map(|p| p.theta.clone()).collect()
    }

    /// Column `j` of the parameter draws.
    pub fn theta_column(&self, j: usize) -> Vec<f64> {
        self.particles.iter().map(|p| p.theta[j]).collect()
    }

    pub fn gamma_column(&self, j: usize) -> Vec<f64> {
        self.particles.iter().filter_map(|p| p.gamma.as_ref().map(|g| g[j])).collect()
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Euclidean distance on the coordinates `idx`.
pub(crate) fn euclidean_on(a: &[f64], b: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

/// Weighted Euclidean distance; unit weights when `weights` is `None`.
pub fn distance(a: &SummaryVector, b: &SummaryVector, weights: Option<&[f64]>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::config(format!("distance between lengths {} and {}", a.len(), b.len())));
    }
    match weights {
        None => Ok(euclidean(a.values(), b.values())),
        Some(w) => {
            if w.len() != a.len() {
                return Err(Error::config("weight vector length does not match summaries"));
            }
            Ok(a.values()
                .iter()
                .zip(b.values())
                .zip(w)
                .map(|((x, y), wi)| wi * (x - y).powi(2))
                .sum::<f64>()
                .sqrt())
        }
    }
}

/// How rejection ABC selects particles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Retention {
    /// Keep the smallest `floor(fraction * N)` distances.
    Quantile(f64),
    /// Keep every draw with distance at most the tolerance.
    Tolerance(f64),
}

/// Draw `n` parameters from the prior, simulate each once, and retain by `retention`.
/// Distances use the summary coordinates `idx` (all coordinates when `None`); they are
/// stored in `d2`, and also in `d1` when `idx` is given.
pub(crate) fn rejection_on(
    problem: &AbcProblem,
    n: usize,
    retention: Retention,
    idx: Option<&[usize]>,
    rng: &RandomStream,
) -> Result<ParticleSet> {
    if n < 100 {
        return Err(Error::config(format!("rejection ABC needs N >= 100, got {n}")));
    }
    match retention {
        Retention::Quantile(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(Error::config(format!("retain fraction {f} outside (0, 1]")));
        }
        Retention::Tolerance(e) if !(e >= 0.0) => {
            return Err(Error::config(format!("tolerance {e} must be non-negative")));
        }
        _ => {}
    }
    let observed = problem.observed.values();
    let draws: Vec<Option<Particle>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.substream(i as u64);
            let theta = problem.prior.sample(&mut r);
            match problem.simulate_summary(&theta, &mut r) {
                Ok(summary) => {
                    let d = match idx {
                        Some(ix) => euclidean_on(summary.values(), observed, ix),
                        None => euclidean(summary.values(), observed),
                    };
                    Some(Particle { theta, gamma: None, d1: idx.map(|_| d), d2: d, summary })
                }
                Err(e) => {
                    warn!("draw {i} discarded: {e}");
                    None
                }
            }
        })
        .collect();
    let failed = draws.iter().filter(|d| d.is_none()).count();
    if failed * 10 > n {
        return Err(Error::Run { failed, total: n });
    }
    // Stable sort keeps draw order among equal distances.
    let mut kept: Vec<Particle> = draws.into_iter().flatten().collect();
    kept.sort_by(|a, b| a.d2.total_cmp(&b.d2));
    match retention {
        Retention::Quantile(f) => {
            let k = ((f * n as f64).floor() as usize).clamp(1, kept.len());
            kept.truncate(k);
        }
        Retention::Tolerance(e) => kept.retain(|p| p.d2 <= e),
    }
    let epsilon = kept.last().map_or(0.0, |p| p.d2);
    Ok(ParticleSet { particles: kept, epsilon, sorted: true })
}

/// Reference-table rejection ABC on the full summary vector.
pub fn rejection_abc(
    problem: &AbcProblem,
    n: usize,
    retention: Retention,
    rng: &RandomStream,
) -> Result<ParticleSet> {
    rejection_on(problem, n, retention, None, rng)
}

/// Epanechnikov kernel without its normalizing constant.
pub fn epanechnikov_weight(t: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::config(format!("kernel bandwidth must be positive, got {epsilon}")));
    }
    if t > epsilon {
        return Ok(0.0);
    }
    Ok((1.0 - (t / epsilon).powi(2)) / epsilon)
}

/// Local-linear regression adjustment of every particle's parameters toward the observed
/// summary, with Epanechnikov weights at bandwidth `particles.epsilon`.
pub fn regression_adjust(particles: &ParticleSet, observed: &SummaryVector) -> Result<ParticleSet> {
    let ps = &particles.particles;
    let d = observed.len();
    if ps.is_empty() {
        return Err(Error::Adjustment("no particles".into()));
    }
    let weights: Vec<f64> =
        ps.iter().map(|p| epanechnikov_weight(p.d2, particles.epsilon)).collect::<Result<_>>()?;
    let active: Vec<usize> = (0..ps.len()).filter(|&i| weights[i] > 0.0).collect();
    if active.len() < d + 2 {
        return Err(Error::Adjustment(format!(
            "{} particles with positive weight, need at least {}",
            active.len(),
            d + 2
        )));
    }
    let y = observed.values();
    let design = |i: usize| -> Vec<f64> {
        let s = ps[i].summary.values();
        std::iter::once(1.0).chain(s.iter().zip(y).map(|(a, b)| a - b)).collect()
    };
    let k = d + 1;
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut sqrt_wx = DMatrix::<f64>::zeros(active.len(), k);
    for (row, &i) in active.iter().enumerate() {
        let x = design(i);
        let w = weights[i];
        for a in 0..k {
            sqrt_wx[(row, a)] = w.sqrt() * x[a];
            for b in 0..k {
                gram[(a, b)] += w * x[a] * x[b];
            }
        }
    }
    let sv = sqrt_wx.singular_values();
    let smax = sv.max();
    if !(smax > 0.0) || sv.min() <= smax * 1e-12 {
        return Err(Error::Adjustment("weighted design matrix is rank deficient".into()));
    }
    for a in 0..k {
        gram[(a, a)] += 1e-10;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Adjustment("weighted Gram matrix not positive definite".into()))?;
    let dim_theta = ps[0].theta.len();
    let mut slopes = Vec::with_capacity(dim_theta);
    for j in 0..dim_theta {
        let mut rhs = DVector::<f64>::zeros(k);
        for &i in &active {
            let x = design(i);
            for a in 0..k {
                rhs[a] += weights[i] * x[a] * ps[i].theta[j];
            }
        }
        slopes.push(chol.solve(&rhs));
    }
    let adjusted = ps
        .iter()
        .map(|p| {
            let mut q = p.clone();
            let s = p.summary.values();
            for (j, beta) in slopes.iter().enumerate() {
                let shift: f64 = (0..d).map(|a| beta[a + 1] * (y[a] - s[a])).sum();
                q.theta[j] = p.theta[j] + shift;
            }
            q
        })
        .collect();
    Ok(ParticleSet { particles: adjusted, epsilon: particles.epsilon, sorted: particles.sorted })
}
