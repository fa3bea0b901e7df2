//! Auxiliary GARCH(1,1)-t fit and score summaries.

use rabc_core::distributions::PriorSpec;
use rabc_core::models::{simulate_stable_sv, StableSvParams};
use rabc_core::summaries::{
    fit_garch_aux, fit_garch_aux_from, garch_default_starts, garch_hessian, garch_loglik,
    garch_score_summary, garch_score_with_step_scale, simulate_garch_aux, AuxGarchParams,
};
use rabc_core::{Dataset, RandomStream};

fn stable_sv_returns(n: usize, seed: u64) -> Dataset {
    let p = StableSvParams::from_slice(&[0.8, 0.2, 1.8]).unwrap();
    simulate_stable_sv(&p, n, &mut RandomStream::new(seed)).unwrap()
}

#[test]
fn recovers_generating_parameters() {
    let truth = AuxGarchParams { beta1: 0.05, beta2: 0.10, beta3: 0.85, beta4: 8.0 };
    let y = simulate_garch_aux(&truth, 100_000, &mut RandomStream::new(1)).unwrap();
    let fit = fit_garch_aux(&y).unwrap();
    let h = garch_hessian(&fit, &y).unwrap();
    let cov = (-h).try_inverse().unwrap();
    let (f, t) = (fit.to_array(), truth.to_array());
    for i in 0..4 {
        let se = cov[(i, i)].sqrt();
        assert!((f[i] - t[i]).abs() <= 3.0 * se, "coordinate {i}: {} vs {} (se {se})", f[i], t[i]);
    }
}

#[test]
fn fit_is_a_maximizer_and_order_free() {
    let y = stable_sv_returns(2000, 2);
    let fit = fit_garch_aux(&y).unwrap();
    let best = garch_loglik(&fit, &y);
    let mut rng = RandomStream::new(3);
    let unit = PriorSpec::Uniform { lo: 0.0, hi: 1.0 };
    for _ in 0..100 {
        let u: Vec<f64> = (0..4).map(|_| unit.sample(&mut rng).unwrap()).collect();
        let b = AuxGarchParams {
            beta1: 0.001 + 2.0 * u[0],
            beta2: 0.98 * u[1] * u[2],
            beta3: 0.98 * u[1] * (1.0 - u[2]),
            beta4: 2.05 + 48.0 * u[3],
        };
        assert!(best >= garch_loglik(&b, &y), "{b:?}");
    }
    let mut starts = garch_default_starts(&y);
    starts.reverse();
    let again = fit_garch_aux_from(&y, &starts).unwrap();
    for (a, b) in fit.to_array().iter().zip(again.to_array()) {
        assert!((a - b).abs() < 1e-6, "{fit:?} vs {again:?}");
    }
}

#[test]
fn score_vanishes_at_the_fit() {
    let y = stable_sv_returns(3000, 4);
    let fit = fit_garch_aux(&y).unwrap();
    let s = garch_score_summary(&y, &fit).unwrap();
    let norm = s.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm < 10.0 * 1e-8, "score norm {norm} at {fit:?}: {:?}", s.values());
}

#[test]
fn finite_difference_step_is_converged() {
    let y = stable_sv_returns(3000, 5);
    let fit = fit_garch_aux(&y).unwrap();
    let z = stable_sv_returns(3000, 6);
    let full = garch_score_with_step_scale(&z, &fit, 1.0).unwrap();
    let half = garch_score_with_step_scale(&z, &fit, 0.5).unwrap();
    let s = garch_score_summary(&z, &fit).unwrap();
    for i in 0..4 {
        assert_eq!(s.values()[i], full[i]);
        let rel = (full[i] - half[i]).abs() / full[i].abs().max(1e-12);
        assert!(rel < 1e-4, "coordinate {i}: {} vs {}", full[i], half[i]);
    }
}

#[test]
fn score_is_unbiased_at_the_truth() {
    let y = stable_sv_returns(2000, 7);
    let fit = fit_garch_aux(&y).unwrap();
    let root = RandomStream::new(8);
    let scores: Vec<Vec<f64>> = (0..200)
        .map(|i| {
            let z = simulate_garch_aux(&fit, 2000, &mut root.substream(i)).unwrap();
            garch_score_summary(&z, &fit).unwrap().values().to_vec()
        })
        .collect();
    for j in 0..4 {
        let col: Vec<f64> = scores.iter().map(|s| s[j]).collect();
        let m = col.iter().sum::<f64>() / 200.0;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 199.0).sqrt();
        assert!(m.abs() <= 3.0 * sd / 200f64.sqrt(), "coordinate {j}: mean {m}, sd {sd}");
    }
}
