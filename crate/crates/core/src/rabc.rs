//! Two-step robust ABC: rejection on the matched block ψ, then SMC on the adjusted block φ
//! under the joint selection condition.

use serde::{Deserialize, Serialize};

use crate::abc::{rejection_on, AbcProblem, ParticleSet, Retention};
use crate::distributions::{JointPrior, PriorSpec};
use crate::error::{Error, Result};
use crate::random::RandomStream;
use crate::smc::{rabc_smc_laplace, rabc_smc_spike_slab, SmcConfig, TraceRecord};
use crate::summaries::Partition;

/// Prior on the adjustment components Γ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaPriorKind {
    /// iid Laplace(0, scale).
    Laplace { scale: f64 },
    /// iid spike at zero with probability `p`, Laplace(0, lambda) slab.
    SpikeSlab { p: f64, lambda: f64 },
}

impl Default for GammaPriorKind {
    fn default() -> Self {
        GammaPriorKind::Laplace { scale: 0.125 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RabcSettings {
    pub n1: usize,
    pub retain_fraction: f64,
    /// Fixed step-one tolerance; replaces quantile retention when set.
    pub step_one_tolerance: Option<f64>,
    pub gamma_prior: GammaPriorKind,
    pub smc: SmcConfig,
}

impl Default for RabcSettings {
    fn default() -> Self {
        Self {
            n1: 25_000,
            retain_fraction: 0.05,
            step_one_tolerance: None,
            gamma_prior: GammaPriorKind::default(),
            smc: SmcConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RabcResult {
    pub theta_draws: Vec<Vec<f64>>,
    /// Empty rows when φ is empty.
    pub gamma_draws: Vec<Vec<f64>>,
    pub eps1: f64,
    pub eps2_initial: f64,
    pub eps2_final: f64,
    pub trace: Vec<TraceRecord>,
    pub partition: Partition,
    pub warning: Option<String>,
    pub particles: ParticleSet,
}

/// Rejection ABC on the ψ coordinates; under quantile retention the tolerance is the
/// largest retained distance.
pub fn run_step_one(
    problem: &AbcProblem,
    partition: &Partition,
    n1: usize,
    retention: Retention,
    rng: &RandomStream,
) -> Result<(ParticleSet, f64)> {
    if n1 < 1000 {
        return Err(Error::config(format!("step one needs N1 >= 1000, got {n1}")));
    }
    if partition.dim() != problem.observed.len() {
        return Err(Error::config("partition does not match the summary dimension"));
    }
    let set = rejection_on(problem, n1, retention, Some(partition.psi()), rng)?;
    let eps1 = set.epsilon;
    Ok((set, eps1))
}

pub fn run_rabc(
    problem: &AbcProblem,
    partition: &Partition,
    settings: &RabcSettings,
    rng: &RandomStream,
) -> Result<RabcResult> {
    let retention = match settings.step_one_tolerance {
        Some(e) => Retention::Tolerance(e),
        None => Retention::Quantile(settings.retain_fraction),
    };
    let (step1, eps1) = run_step_one(problem, partition, settings.n1, retention, &rng.substream(1))?;
    if partition.phi().is_empty() {
        return Ok(RabcResult {
            theta_draws: step1.thetas(),
            gamma_draws: vec![Vec::new(); step1.len()],
            eps1,
            eps2_initial: eps1,
            eps2_final: eps1,
            trace: Vec::new(),
            partition: partition.clone(),
            warning: None,
            particles: step1,
        });
    }
    let d_phi = partition.phi().len();
    let step_rng = rng.substream(2);
    let out = match settings.gamma_prior {
        GammaPriorKind::Laplace { scale } => {
            let gp = JointPrior::iid(PriorSpec::Laplace { location: 0.0, scale }, d_phi)?;
            rabc_smc_laplace(&step1, eps1, &gp, problem, partition, &settings.smc, &step_rng)?
        }
        GammaPriorKind::SpikeSlab { p, lambda } => {
            rabc_smc_spike_slab(&step1, eps1, p, lambda, problem, partition, &settings.smc, &step_rng)?
        }
    };
    let set = out.set;
    Ok(RabcResult {
        theta_draws: set.thetas(),
        gamma_draws: set.particles.iter().map(|p| p.gamma.clone().unwrap_or_default()).collect(),
        eps1,
        eps2_initial: out.initial_epsilon,
        eps2_final: set.epsilon,
        trace: out.trace,
        partition: partition.clone(),
        warning: out.warning,
        particles: set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{NormalLocationModel, Simulator};
    use crate::summaries::{MeanVariance, SummaryMap};

    fn normal_setup(sigma_data: f64) -> (JointPrior, NormalLocationModel, crate::summaries::SummaryVector) {
        let prior = JointPrior::new(vec![PriorSpec::Gaussian { mean: 0.0, variance: 25.0 }]).unwrap();
        let data_model = NormalLocationModel { sigma: sigma_data, n: 100 };
        let y = data_model.simulate(&[1.0], &mut RandomStream::new(21)).unwrap();
        let obs = MeanVariance.summarize(&y).unwrap();
        (prior, NormalLocationModel { sigma: 1.0, n: 100 }, obs)
    }

    #[test]
    fn step_one_count() {
        let (prior, sim, obs) = normal_setup(1.0);
        let problem = AbcProblem::new(&prior, &sim, &MeanVariance, &obs).unwrap();
        let part = Partition::new(vec![0], vec![1], 2).unwrap();
        let (set, eps1) = run_step_one(&problem, &part, 25_000, Retention::Quantile(0.05), &RandomStream::new(1)).unwrap();
        assert_eq!(set.len(), 1250);
        assert_eq!(eps1, set.particles.last().unwrap().d2);
        assert!(run_step_one(&problem, &part, 999, Retention::Quantile(0.05), &RandomStream::new(1)).is_err());
    }

    #[test]
    fn fixed_tolerance_step_one() {
        let (prior, sim, obs) = normal_setup(1.0);
        let problem = AbcProblem::new(&prior, &sim, &MeanVariance, &obs).unwrap();
        let part = Partition::all_psi(2);
        let rng = RandomStream::new(8);
        let (all, _) = run_step_one(&problem, &part, 2000, Retention::Quantile(1.0), &rng.substream(1)).unwrap();
        let tol = 0.3;
        let settings = RabcSettings { n1: 2000, step_one_tolerance: Some(tol), ..Default::default() };
        let res = run_rabc(&problem, &part, &settings, &rng).unwrap();
        let want = all.particles.iter().filter(|p| p.d2 <= tol).count();
        assert!(want > 0 && want < 2000);
        assert_eq!(res.particles.len(), want);
        assert!(res.eps1 <= tol);
    }

    #[test]
    fn empty_phi_is_step_one() {
        let (prior, sim, obs) = normal_setup(1.0);
        let problem = AbcProblem::new(&prior, &sim, &MeanVariance, &obs).unwrap();
        let part = Partition::all_psi(2);
        let settings = RabcSettings { n1: 2000, ..Default::default() };
        let rng = RandomStream::new(5);
        let res = run_rabc(&problem, &part, &settings, &rng).unwrap();
        let (step1, eps1) = run_step_one(&problem, &part, 2000, Retention::Quantile(0.05), &rng.substream(1)).unwrap();
        assert_eq!(res.particles, step1);
        assert_eq!(res.eps1, eps1);
    }

    #[test]
    fn joint_condition_and_determinism() {
        let (prior, sim, obs) = normal_setup(2.0);
        let problem = AbcProblem::new(&prior, &sim, &MeanVariance, &obs).unwrap();
        let part = Partition::new(vec![0], vec![1], 2).unwrap();
        for gamma_prior in [GammaPriorKind::Laplace { scale: 0.125 }, GammaPriorKind::SpikeSlab { p: 0.5, lambda: 0.125 }] {
            let settings = RabcSettings {
                n1: 4000,
                gamma_prior,
                smc: SmcConfig { n: 200, ..Default::default() },
                ..Default::default()
            };
            let a = run_rabc(&problem, &part, &settings, &RandomStream::new(9)).unwrap();
            assert_eq!(a.theta_draws.len(), 200);
            assert!(a.eps2_final <= a.eps2_initial);
            for p in &a.particles.particles {
                assert!(p.d1.unwrap() <= a.eps1);
                assert!(p.d2 <= a.eps2_final);
            }
            assert!(a.trace.windows(2).all(|w| w[1].epsilon <= w[0].epsilon));
            let b = run_rabc(&problem, &part, &settings, &RandomStream::new(9)).unwrap();
            assert_eq!(a.particles, b.particles);
        }
    }
}
