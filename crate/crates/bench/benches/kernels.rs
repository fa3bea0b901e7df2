use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rabc_core::models::{simulate_gk, simulate_ma2, simulate_stable_sv, GkParams, NormalLocationModel, StableSvParams};
use rabc_core::rabc::run_rabc;
use rabc_core::summaries::{
    autocovariance_summary, fit_garch_aux, garch_loglik, garch_score_summary, robust_gk_summary, MeanVariance,
};
use rabc_core::{AbcProblem, JointPrior, Partition, PriorSpec, RabcSettings, RandomStream, SmcConfig, SummaryMap};

fn simulators(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    let gk = GkParams::new(3.0, 1.0, 2.0, 0.5).unwrap();
    let sv = StableSvParams { theta2: 0.8, theta3: 0.2, theta4: 1.8 };
    group.bench_function("gk_n2000", |b| {
        b.iter_batched(|| RandomStream::new(1), |mut r| simulate_gk(&gk, 2000, &mut r).unwrap(), BatchSize::SmallInput)
    });
    group.bench_function("ma2_n1000", |b| {
        b.iter_batched(|| RandomStream::new(1), |mut r| simulate_ma2(0.6, 0.2, 1000, &mut r).unwrap(), BatchSize::SmallInput)
    });
    group.bench_function("stable_sv_n2000", |b| {
        b.iter_batched(|| RandomStream::new(1), |mut r| simulate_stable_sv(&sv, 2000, &mut r).unwrap(), BatchSize::SmallInput)
    });
    group.finish();
}

fn summaries(c: &mut Criterion) {
    let mut group = c.benchmark_group("summaries");
    let gk = simulate_gk(&GkParams::new(3.0, 1.0, 2.0, 0.5).unwrap(), 2000, &mut RandomStream::new(2)).unwrap();
    let ma = simulate_ma2(0.6, 0.2, 1000, &mut RandomStream::new(3)).unwrap();
    let sv = simulate_stable_sv(&StableSvParams { theta2: 0.8, theta3: 0.2, theta4: 1.8 }, 2000, &mut RandomStream::new(4))
        .unwrap();
    let beta = fit_garch_aux(&sv).unwrap();
    group.bench_function("robust_quantiles_n2000", |b| b.iter(|| robust_gk_summary(black_box(&gk)).unwrap()));
    group.bench_function("autocovariances_n1000", |b| b.iter(|| autocovariance_summary(black_box(&ma)).unwrap()));
    group.bench_function("garch_loglik_n2000", |b| b.iter(|| garch_loglik(black_box(&beta), &sv)));
    group.bench_function("garch_score_n2000", |b| b.iter(|| garch_score_summary(black_box(&sv), &beta).unwrap()));
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    group.bench_function("garch_fit_n2000", |b| b.iter(|| fit_garch_aux(black_box(&sv)).unwrap()));
    group.finish();
}

fn samplers(c: &mut Criterion) {
    let prior = JointPrior::new(vec![PriorSpec::Gaussian { mean: 0.0, variance: 25.0 }]).unwrap();
    let sim = NormalLocationModel { sigma: 1.0, n: 100 };
    let y = rabc_core::models::simulate_normal_location(1.0, 2.0, 100, &mut RandomStream::new(5)).unwrap();
    let obs = MeanVariance.summarize(&y).unwrap();
    let problem = AbcProblem::new(&prior, &sim, &MeanVariance, &obs).unwrap();
    let part = Partition::new(vec![0], vec![1], 2).unwrap();
    let settings = RabcSettings { n1: 5000, smc: SmcConfig { n: 250, ..SmcConfig::default() }, ..RabcSettings::default() };

    let mut group = c.benchmark_group("samplers");
    group.sample_size(10);
    group.bench_function("rabc_laplace_normal_toy", |b| {
        b.iter(|| run_rabc(&problem, &part, &settings, &RandomStream::new(6)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, simulators, summaries, samplers);
criterion_main!(benches);
