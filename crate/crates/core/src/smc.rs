//! ABC-SMC replenishment sampler and the two robust step-two variants (Laplace and
//! spike-and-slab adjustment priors).

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::{euclidean, euclidean_on, AbcProblem, Particle, ParticleSet};
use crate::distributions::{JointPrior, PriorSpec};
use crate::error::{Error, Result};
use crate::random::RandomStream;
use crate::summaries::Partition;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcConfig {
    pub n: usize,
    pub alpha: f64,
    pub p_acc_min: f64,
    pub r_init: usize,
    pub c_moves: f64,
    pub max_moves: usize,
    pub max_iterations: usize,
    /// Multiplier on the empirical proposal covariance.
    pub proposal_scale: f64,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            alpha: 0.5,
            p_acc_min: 0.01,
            r_init: 5,
            c_moves: 0.01,
            max_moves: 100,
            max_iterations: 500,
            proposal_scale: 1.0,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.p_acc_min > 0.0 && self.p_acc_min < 1.0) {
            return Err(Error::config(format!("p_acc_min {} outside (0, 1)", self.p_acc_min)));
        }
        if !(self.c_moves > 0.0 && self.c_moves < 1.0) {
            return Err(Error::config(format!("c_moves {} outside (0, 1)", self.c_moves)));
        }
        let dropped = (self.alpha * self.n as f64).floor() as usize;
        if dropped == 0 || dropped >= self.n {
            return Err(Error::config(format!(
                "N = {} with alpha = {} drops {dropped} particles per iteration",
                self.n, self.alpha
            )));
        }
        if self.r_init == 0 || self.max_moves == 0 || self.max_iterations == 0 {
            return Err(Error::config("move counts and iteration cap must be positive"));
        }
        if !(self.proposal_scale > 0.0) {
            return Err(Error::config("proposal_scale must be positive"));
        }
        Ok(())
    }
}

const MOVE_CAP: usize = 100;

/// Number of MCMC moves so that a particle stays put with probability about `c`.
pub fn adapt_moves(p_acc_prev: f64, c: f64) -> usize {
    if p_acc_prev >= 1.0 {
        return SmcConfig::default().r_init;
    }
    if !(p_acc_prev > 0.0) {
        return MOVE_CAP;
    }
    let r = c.ln() / (1.0 - p_acc_prev).ln();
    // Guard against round-off pushing an exact integer over the ceiling.
    ((r - 1e-9).ceil().max(1.0) as usize).min(MOVE_CAP)
}

/// Empirical covariance of the rows plus 1e-8 on the diagonal.
pub fn tune_joint_proposal(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if d == 0 || n < d + 2 {
        return Err(Error::Tuning(format!("{n} particles for a {d}-dimensional proposal")));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in rows {
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
        cov[(a, a)] += 1e-8;
    }
    Ok(cov)
}

fn diagonal_fallback(rows: &[Vec<f64>], d: usize) -> DMatrix<f64> {
    let n = rows.len().max(1) as f64;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let v = if rows.len() > 1 {
            rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        cov[(j, j)] = v + 1e-8;
    }
    cov
}

/// Gaussian random walk with a lower-triangular covariance factor.
#[derive(Clone, Debug)]
struct RandomWalk {
    factor: DMatrix<f64>,
}

impl RandomWalk {
    fn tuned(rows: &[Vec<f64>], d: usize, scale: f64) -> Self {
        let cov = match tune_joint_proposal(rows) {
            Ok(c) => c,
            Err(e) => {
                warn!("{e}; using per-coordinate variances");
                diagonal_fallback(rows, d)
            }
        } * scale;
        let factor = match cov.clone().cholesky() {
            Some(c) => c.l(),
            None => {
                warn!("proposal covariance not positive definite; using its diagonal");
                DMatrix::from_diagonal(&cov.diagonal().map(|v| v.max(1e-8).sqrt()))
            }
        };
        Self { factor }
    }

    fn propose(&self, x: &[f64], rng: &mut RandomStream) -> Vec<f64> {
        let z = DVector::from_iterator(x.len(), (0..x.len()).map(|_| StandardNormal.sample(rng)));
        let step = &self.factor * z;
        x.iter().zip(step.iter()).map(|(a, b)| a + b).collect()
    }
}

/// One SMC iteration's record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub epsilon: f64,
    pub p_acc: f64,
    pub moves: usize,
}

#[derive(Clone, Debug)]
pub struct SmcOutput {
    pub set: ParticleSet,
    /// Largest distance in the initial population.
    pub initial_epsilon: f64,
    pub trace: Vec<TraceRecord>,
    pub warning: Option<String>,
}

/// An MCMC-ABC move kernel used by the replenishment loop.
pub trait MoveKernel: Sync {
    /// Refit proposal parameters to the surviving particles.
    fn tune(&mut self, survivors: &[Particle]);

    /// One Metropolis–Hastings move at tolerance `eps`; `Some` when accepted.
    fn step(&self, current: &Particle, eps: f64, rng: &mut RandomStream) -> Option<Particle>;
}

fn sort_by_distance(ps: &mut [Particle]) {
    ps.sort_by(|a, b| a.d2.total_cmp(&b.d2));
}

/// Drop-resample-move loop shared by every SMC variant.
pub fn replenish<K: MoveKernel>(
    mut particles: Vec<Particle>,
    kernel: &mut K,
    cfg: &SmcConfig,
    rng: &RandomStream,
) -> Result<SmcOutput> {
    cfg.validate()?;
    if particles.len() != cfg.n {
        return Err(Error::config(format!("{} initial particles for N = {}", particles.len(), cfg.n)));
    }
    sort_by_distance(&mut particles);
    let n_drop = (cfg.alpha * cfg.n as f64).floor() as usize;
    let n_keep = cfg.n - n_drop;
    let initial_epsilon = particles.last().map_or(f64::INFINITY, |p| p.d2);
    let mut epsilon = initial_epsilon;
    let mut trace = Vec::new();
    let mut warning = None;
    let mut moves = cfg.r_init;
    let mut p_acc = 1.0;
    let mut iteration = 0;

    while p_acc > cfg.p_acc_min {
        if iteration == cfg.max_iterations {
            warning = Some(format!("stopped at the iteration cap ({})", cfg.max_iterations));
            warn!("{}", warning.as_deref().unwrap_or_default());
            break;
        }
        iteration += 1;
        let eps_next = particles[n_keep - 1].d2;
        particles.truncate(n_keep);
        kernel.tune(&particles);

        let survivors = &particles;
        let kernel_ref = &*kernel;
        let moved: Vec<(Particle, usize)> = (0..n_drop)
            .into_par_iter()
            .map(|j| {
                let mut r = rng.derive(&[iteration as u64, j as u64]);
                let mut p = survivors[r.random_range(0..n_keep)].clone();
                let mut accepted = 0;
                for _ in 0..moves {
                    if let Some(q) = kernel_ref.step(&p, eps_next, &mut r) {
                        p = q;
                        accepted += 1;
                    }
                }
                (p, accepted)
            })
            .collect();
        let accepted: usize = moved.iter().map(|m| m.1).sum();
        p_acc = accepted as f64 / (moves * n_drop) as f64;
        trace.push(TraceRecord { iteration, epsilon: eps_next, p_acc, moves });
        particles.extend(moved.into_iter().map(|m| m.0));
        sort_by_distance(&mut particles);
        epsilon = eps_next;

        if accepted == 0 {
            warning = Some(format!(
                "no moves accepted at iteration {iteration} with R = {moves}; returning current particles"
            ));
            warn!("{}", warning.as_deref().unwrap_or_default());
            break;
        }
        moves = if p_acc >= 1.0 { cfg.r_init } else { adapt_moves(p_acc, cfg.c_moves) };
        moves = moves.min(cfg.max_moves);
    }
    Ok(SmcOutput { set: ParticleSet { particles, epsilon, sorted: true }, initial_epsilon, trace, warning })
}

/// Simulate until success, up to 100 attempts, returning the draw and its summary.
fn initial_draw(problem: &AbcProblem, rng: &RandomStream) -> Result<(Vec<f64>, crate::summaries::SummaryVector)> {
    let mut last = None;
    for attempt in 0..100u64 {
        let mut r = rng.substream(attempt);
        let theta = problem.prior.sample(&mut r);
        match problem.simulate_summary(&theta, &mut r) {
            Ok(s) => return Ok((theta, s)),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or(Error::Run { failed: 100, total: 100 }))
}

struct AbcKernel<'a> {
    problem: AbcProblem<'a>,
    scale: f64,
    walk: Option<RandomWalk>,
}

impl MoveKernel for AbcKernel<'_> {
    fn tune(&mut self, survivors: &[Particle]) {
        let rows: Vec<Vec<f64>> = survivors.iter().map(|p| p.theta.clone()).collect();
        self.walk = Some(RandomWalk::tuned(&rows, self.problem.prior.dim(), self.scale));
    }

    fn step(&self, current: &Particle, eps: f64, rng: &mut RandomStream) -> Option<Particle> {
        let walk = self.walk.as_ref()?;
        let theta = walk.propose(&current.theta, rng);
        let log_ratio = self.problem.prior.log_density(&theta) - self.problem.prior.log_density(&current.theta);
        // The indicator only matters when the prior ratio alone would accept.
        if !(rng.open01().ln() < log_ratio) {
            return None;
        }
        let summary = self.problem.simulate_summary(&theta, rng).ok()?;
        let d = euclidean(summary.values(), self.problem.observed.values());
        (d <= eps).then_some(Particle { theta, gamma: None, d1: None, d2: d, summary })
    }
}

/// Standard ABC-SMC on the full summary vector.
pub fn smc_abc(problem: &AbcProblem, cfg: &SmcConfig, rng: &RandomStream) -> Result<SmcOutput> {
    cfg.validate()?;
    let init_rng = rng.substream(0);
    let init: Vec<Particle> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let (theta, summary) = initial_draw(problem, &init_rng.substream(i as u64))?;
            let d = euclidean(summary.values(), problem.observed.values());
            Ok(Particle { theta, gamma: None, d1: None, d2: d, summary })
        })
        .collect::<Result<_>>()?;
    let mut kernel = AbcKernel { problem: *problem, scale: cfg.proposal_scale, walk: None };
    replenish(init, &mut kernel, cfg, &rng.substream(1))
}

/// Adaptive proposal for spike-and-slab adjustment components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaProposalState {
    pub zero_prob: Vec<f64>,
    pub slab_std: Vec<f64>,
}

const ZERO_PROB_CLIP: (f64, f64) = (0.05, 0.95);

impl GammaProposalState {
    pub fn new(dim: usize, p: f64, lambda: f64) -> Self {
        Self {
            zero_prob: vec![p.clamp(ZERO_PROB_CLIP.0, ZERO_PROB_CLIP.1); dim],
            slab_std: vec![lambda; dim],
        }
    }

    /// Zero probability = clipped fraction of exact zeros; slab std = std of the nonzero
    /// values (falls back to `lambda`).
    pub fn update(&mut self, gammas: &[&[f64]], lambda: f64) {
        for j in 0..self.zero_prob.len() {
            let nonzero: Vec<f64> = gammas.iter().map(|g| g[j]).filter(|&v| v != 0.0).collect();
            let zeros = gammas.len() - nonzero.len();
            let frac = if gammas.is_empty() { 0.5 } else { zeros as f64 / gammas.len() as f64 };
            self.zero_prob[j] = frac.clamp(ZERO_PROB_CLIP.0, ZERO_PROB_CLIP.1);
            let sd = if nonzero.len() >= 2 {
                let m = nonzero.iter().sum::<f64>() / nonzero.len() as f64;
                (nonzero.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (nonzero.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            self.slab_std[j] = if sd > 0.0 && sd.is_finite() { sd } else { lambda };
        }
    }

    pub fn propose(&self, current: &[f64], rng: &mut RandomStream) -> Vec<f64> {
        current
            .iter()
            .enumerate()
            .map(|(j, &g)| {
                if rng.random::<f64>() < self.zero_prob[j] {
                    0.0
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    g + self.slab_std[j] * z
                }
            })
            .collect()
    }

    /// Log proposal mass/density of moving from `from` to `to`.
    pub fn log_q(&self, to: &[f64], from: &[f64]) -> f64 {
        let mut total = 0.0;
        for j in 0..to.len() {
            if to[j] == 0.0 {
                total += self.zero_prob[j].ln();
            } else {
                let s = self.slab_std[j];
                let r = (to[j] - from[j]) / s;
                total += (1.0 - self.zero_prob[j]).ln()
                    - 0.5 * r * r
                    - s.ln()
                    - 0.5 * (2.0 * std::f64::consts::PI).ln();
            }
        }
        total
    }
}

/// Sum of spike-and-slab log masses/densities.
pub fn spike_slab_log_prior(gamma: &[f64], p: f64, lambda: f64) -> f64 {
    let prior = PriorSpec::SpikeSlab { p, scale: lambda };
    gamma.iter().map(|&g| prior.log_density(g).value).sum()
}

/// Log of the Γ-block prior-times-proposal ratio in the spike-and-slab MH acceptance.
pub fn spike_slab_gamma_log_ratio(
    state: &GammaProposalState,
    current: &[f64],
    proposed: &[f64],
    p: f64,
    lambda: f64,
) -> f64 {
    spike_slab_log_prior(proposed, p, lambda) - spike_slab_log_prior(current, p, lambda)
        + state.log_q(current, proposed)
        - state.log_q(proposed, current)
}

enum GammaMode {
    Laplace { prior: JointPrior, walk: Option<RandomWalk> },
    SpikeSlab { p: f64, lambda: f64, state: GammaProposalState, walk: Option<RandomWalk> },
}

struct RobustKernel<'a> {
    problem: AbcProblem<'a>,
    partition: &'a Partition,
    eps1: f64,
    scale: f64,
    mode: GammaMode,
}

/// Distance between the adjusted φ block and the observed φ block.
pub(crate) fn adjusted_distance(summary: &[f64], observed: &[f64], phi: &[usize], gamma: &[f64]) -> f64 {
    phi.iter()
        .zip(gamma)
        .map(|(&i, g)| (summary[i] + g - observed[i]).powi(2))
        .sum::<f64>()
        .sqrt()
}

impl MoveKernel for RobustKernel<'_> {
    fn tune(&mut self, survivors: &[Particle]) {
        let dt = self.problem.prior.dim();
        match &mut self.mode {
            GammaMode::Laplace { walk, prior } => {
                let rows: Vec<Vec<f64>> = survivors
                    .iter()
                    .map(|p| p.theta.iter().chain(p.gamma.iter().flatten()).copied().collect())
                    .collect();
                *walk = Some(RandomWalk::tuned(&rows, dt + prior.dim(), self.scale));
            }
            GammaMode::SpikeSlab { lambda, state, walk, .. } => {
                let rows: Vec<Vec<f64>> = survivors.iter().map(|p| p.theta.clone()).collect();
                *walk = Some(RandomWalk::tuned(&rows, dt, self.scale));
                let gammas: Vec<&[f64]> = survivors.iter().filter_map(|p| p.gamma.as_deref()).collect();
                state.update(&gammas, *lambda);
            }
        }
    }

    fn step(&self, current: &Particle, eps: f64, rng: &mut RandomStream) -> Option<Particle> {
        let dt = current.theta.len();
        let gamma_now = current.gamma.as_deref()?;
        let prior = self.problem.prior;
        let (theta, gamma, log_ratio) = match &self.mode {
            GammaMode::Laplace { prior: gp, walk } => {
                let x: Vec<f64> = current.theta.iter().chain(gamma_now).copied().collect();
                let y = walk.as_ref()?.propose(&x, rng);
                let (theta, gamma) = (y[..dt].to_vec(), y[dt..].to_vec());
                let lr = prior.log_density(&theta) - prior.log_density(&current.theta)
                    + gp.log_density(&gamma)
                    - gp.log_density(gamma_now);
                (theta, gamma, lr)
            }
            GammaMode::SpikeSlab { p, lambda, state, walk } => {
                let theta = walk.as_ref()?.propose(&current.theta, rng);
                let gamma = state.propose(gamma_now, rng);
                let lr = prior.log_density(&theta) - prior.log_density(&current.theta)
                    + spike_slab_gamma_log_ratio(state, gamma_now, &gamma, *p, *lambda);
                (theta, gamma, lr)
            }
        };
        if !(rng.open01().ln() < log_ratio) {
            return None;
        }
        let summary = self.problem.simulate_summary(&theta, rng).ok()?;
        let y = self.problem.observed.values();
        let d1 = euclidean_on(summary.values(), y, self.partition.psi());
        if d1 > self.eps1 {
            return None;
        }
        let d2 = adjusted_distance(summary.values(), y, self.partition.phi(), &gamma);
        (d2 <= eps).then_some(Particle { theta, gamma: Some(gamma), d1: Some(d1), d2, summary })
    }
}

/// Pair step-one draws (and their cached simulations) with Γ drawn from its prior.
fn initialize_step_two(
    step1: &ParticleSet,
    problem: &AbcProblem,
    partition: &Partition,
    n: usize,
    draw_gamma: &(dyn Fn(&mut RandomStream) -> Vec<f64> + Sync),
    rng: &RandomStream,
) -> Result<Vec<Particle>> {
    let m = step1.len();
    if m == 0 {
        return Err(Error::config("step one retained no particles"));
    }
    let y = problem.observed.values();
    Ok((0..n)
        .map(|i| {
            let mut r = rng.substream(i as u64);
            let src = if m == n { &step1.particles[i] } else { &step1.particles[r.random_range(0..m)] };
            let gamma = draw_gamma(&mut r);
            let s = src.summary.values();
            let d1 = euclidean_on(s, y, partition.psi());
            let d2 = adjusted_distance(s, y, partition.phi(), &gamma);
            Particle { theta: src.theta.clone(), gamma: Some(gamma), d1: Some(d1), d2, summary: src.summary.clone() }
        })
        .collect())
}

fn check_step_two(partition: &Partition, problem: &AbcProblem, eps1: f64) -> Result<()> {
    if partition.dim() != problem.observed.len() {
        return Err(Error::config("partition does not match the summary dimension"));
    }
    if partition.phi().is_empty() {
        return Err(Error::config("step two needs a non-empty phi block"));
    }
    if !(eps1 >= 0.0) {
        return Err(Error::config(format!("step-one tolerance {eps1} must be non-negative")));
    }
    Ok(())
}

/// Step two with an arbitrary factorized Γ prior (normally iid Laplace) and a joint Gaussian
/// random walk on (θ, Γ).
#[allow(clippy::too_many_arguments)]
pub fn rabc_smc_laplace(
    step1: &ParticleSet,
    eps1: f64,
    gamma_prior: &JointPrior,
    problem: &AbcProblem,
    partition: &Partition,
    cfg: &SmcConfig,
    rng: &RandomStream,
) -> Result<SmcOutput> {
    cfg.validate()?;
    check_step_two(partition, problem, eps1)?;
    if gamma_prior.dim() != partition.phi().len() {
        return Err(Error::config(format!(
            "gamma prior has {} components for {} adjusted summaries",
            gamma_prior.dim(),
            partition.phi().len()
        )));
    }
    let draw = |r: &mut RandomStream| gamma_prior.sample(r);
    let init = initialize_step_two(step1, problem, partition, cfg.n, &draw, &rng.substream(0))?;
    let mut kernel = RobustKernel {
        problem: *problem,
        partition,
        eps1,
        scale: cfg.proposal_scale,
        mode: GammaMode::Laplace { prior: gamma_prior.clone(), walk: None },
    };
    replenish(init, &mut kernel, cfg, &rng.substream(1))
}

/// Step two with iid spike-and-slab Γ priors, a θ random walk and the adaptive mixed
/// proposal for Γ.
#[allow(clippy::too_many_arguments)]
pub fn rabc_smc_spike_slab(
    step1: &ParticleSet,
    eps1: f64,
    p: f64,
    lambda: f64,
    problem: &AbcProblem,
    partition: &Partition,
    cfg: &SmcConfig,
    rng: &RandomStream,
) -> Result<SmcOutput> {
    cfg.validate()?;
    check_step_two(partition, problem, eps1)?;
    let spec = PriorSpec::SpikeSlab { p, scale: lambda };
    spec.validate()?;
    let d = partition.phi().len();
    let draw = |r: &mut RandomStream| (0..d).map(|_| spec.sample_unchecked(r)).collect();
    let init = initialize_step_two(step1, problem, partition, cfg.n, &draw, &rng.substream(0))?;
    let mut kernel = RobustKernel {
        problem: *problem,
        partition,
        eps1,
        scale: cfg.proposal_scale,
        mode: GammaMode::SpikeSlab { p, lambda, state: GammaProposalState::new(d, p, lambda), walk: None },
    };
    replenish(init, &mut kernel, cfg, &rng.substream(1))
}
