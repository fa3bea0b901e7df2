//! Step-one localization and prior-predictive probes on the g-and-k and MA(2) designs.

use rabc_core::abc::{AbcProblem, Retention};
use rabc_core::diagnostics::partition_probe;
use rabc_core::distributions::{JointPrior, PriorSpec};
use rabc_core::models::{simulate_gaussian_mixture, simulate_sv, GkModel, Ma2Model, MixtureParams, SvParams};
use rabc_core::rabc::run_step_one;
use rabc_core::summaries::{Autocovariances, Partition, RobustQuantiles, SummaryMap};
use rabc_core::RandomStream;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let sa: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>().sqrt();
    let sb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>().sqrt();
    cov / (sa * sb)
}

fn gk_prior() -> JointPrior {
    JointPrior::iid(PriorSpec::Uniform { lo: 0.0, hi: 10.0 }, 4).unwrap()
}

#[test]
fn gk_probe_links_a_and_b_to_location_and_scale() {
    let rows = partition_probe(&gk_prior(), &GkModel { n: 500 }, &RobustQuantiles, 200, 20, &RandomStream::new(1))
        .unwrap();
    let a: Vec<f64> = rows.iter().map(|r| r.theta[0]).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.theta[1]).collect();
    let s1_mean: Vec<f64> = rows.iter().map(|r| r.mean[0]).collect();
    let s1_std: Vec<f64> = rows.iter().map(|r| r.std[0]).collect();
    assert!(corr(&a, &s1_mean) >= 0.9, "{}", corr(&a, &s1_mean));
    let r = corr(&b, &s1_std);
    // Two-sided 1% critical value for n = 200 is about 0.18.
    assert!(r > 0.18, "{r}");
}

#[test]
fn gk_step_one_narrows_skewness_parameter() {
    let mix = MixtureParams { w: 0.6, mu1: 1.0, var1: 2.0, mu2: 7.0, var2: 2.0 };
    let y = simulate_gaussian_mixture(&mix, 2000, &mut RandomStream::new(2)).unwrap();
    let obs = RobustQuantiles.summarize(&y).unwrap();
    let prior = gk_prior();
    let sim = GkModel { n: 2000 };
    let problem = AbcProblem::new(&prior, &sim, &RobustQuantiles, &obs).unwrap();
    let part = Partition::from_one_based(&[3], &[1, 2, 4], 4).unwrap();
    let (set, _) = run_step_one(&problem, &part, 10_000, Retention::Quantile(0.05), &RandomStream::new(3)).unwrap();
    assert_eq!(set.len(), 500);
    assert!(var(&set.theta_column(2)) < 100.0 / 12.0);
}

#[test]
fn ma2_step_one_localizes_theta2_only() {
    let sv = SvParams { omega: -0.76, rho: 0.90, sigma_v: 0.36 };
    let y = simulate_sv(&sv, 1000, &mut RandomStream::new(4)).unwrap();
    let obs = Autocovariances.summarize(&y).unwrap();
    let prior = JointPrior::ma2_triangle();
    let sim = Ma2Model { n: 1000 };
    let problem = AbcProblem::new(&prior, &sim, &Autocovariances, &obs).unwrap();
    let part = Partition::from_one_based(&[3], &[1, 2], 3).unwrap();
    let (set, eps1) = run_step_one(&problem, &part, 25_000, Retention::Quantile(0.05), &RandomStream::new(5)).unwrap();
    assert_eq!(set.len(), 1250);
    let t1 = set.theta_column(0);
    let t2 = set.theta_column(1);
    assert!((mean(&t2) - obs.values()[2]).abs() < 0.1, "{} vs {}", mean(&t2), obs.values()[2]);
    assert!(var(&t2).sqrt() < 0.15);
    // Under the triangle prior with theta2 near 0, theta1 is close to uniform on (-1, 1).
    assert!(var(&t1) > 0.2, "theta1 variance {}", var(&t1));
    assert!(set.particles.iter().all(|p| p.d1.unwrap() <= eps1));
}
