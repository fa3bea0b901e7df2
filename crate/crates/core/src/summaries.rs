//! Summary-statistic maps, the ψ/φ partition, and the GARCH(1,1)-t auxiliary model whose score
//! serves as a summary for the volatility application.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::models::{robust_from_octiles, Dataset};
use crate::optim::{nelder_mead, NelderMeadOptions};

/// Fixed-length summary values with per-entry labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryVector {
    values: Vec<f64>,
    labels: Arc<[String]>,
}

impl SummaryVector {
    pub fn new(values: Vec<f64>, labels: Arc<[String]>) -> Result<Self> {
        if values.len() != labels.len() {
            return Err(Error::config(format!(
                "{} summary values for {} labels",
                values.len(),
                labels.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateSummary(format!(
                "summary '{}' is not finite ({})",
                labels[i], values[i]
            )));
        }
        Ok(Self { values, labels })
    }

    /// Labels `s1..sd`.
    pub fn unlabeled(values: Vec<f64>) -> Result<Self> {
        let labels = default_labels(values.len());
        Self::new(values, labels)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &Arc<[String]> {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn default_labels(d: usize) -> Arc<[String]> {
    (1..=d).map(|i| format!("s{i}")).collect()
}

fn labels(names: &[&str]) -> Arc<[String]> {
    names.iter().map(|s| s.to_string()).collect()
}

/// A map from a dataset to a summary vector of fixed dimension.
pub trait SummaryMap: Send + Sync {
    fn labels(&self) -> Arc<[String]>;

    fn dim(&self) -> usize {
        self.labels().len()
    }

    fn summarize(&self, z: &Dataset) -> Result<SummaryVector>;
}

/// Split of summary indices into the matched block ψ and the adjusted block φ.
/// Indices are zero-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    psi: Vec<usize>,
    phi: Vec<usize>,
}

impl Partition {
    pub fn new(psi: Vec<usize>, phi: Vec<usize>, dim: usize) -> Result<Self> {
        if psi.is_empty() {
            return Err(Error::config("partition: psi must not be empty"));
        }
        let mut seen = vec![false; dim];
        for &i in psi.iter().chain(&phi) {
            if i >= dim {
                return Err(Error::config(format!(
                    "partition: index {} outside summary dimension {dim}",
                    i + 1
                )));
            }
            if seen[i] {
                return Err(Error::config(format!("partition: index {} repeated", i + 1)));
            }
            seen[i] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::config(format!("partition: index {} not assigned", missing + 1)));
        }
        Ok(Self { psi, phi })
    }

    /// From 1-based indices as written in configuration files.
    pub fn from_one_based(psi: &[usize], phi: &[usize], dim: usize) -> Result<Self> {
        let shift = |v: &[usize]| -> Result<Vec<usize>> {
            v.iter()
                .map(|&i| {
                    i.checked_sub(1)
                        .ok_or_else(|| Error::config("partition: indices are 1-based"))
                })
                .collect()
        };
        Self::new(shift(psi)?, shift(phi)?, dim)
    }

    /// Every summary in ψ.
    pub fn all_psi(dim: usize) -> Self {
        Self { psi: (0..dim).collect(), phi: Vec::new() }
    }

    pub fn psi(&self) -> &[usize] {
        &self.psi
    }

    pub fn phi(&self) -> &[usize] {
        &self.phi
    }

    pub fn dim(&self) -> usize {
        self.psi.len() + self.phi.len()
    }
}

fn select(eta: &SummaryVector, idx: &[usize]) -> Result<SummaryVector> {
    let mut values = Vec::with_capacity(idx.len());
    let mut names = Vec::with_capacity(idx.len());
    for &i in idx {
        let v = eta.values.get(i).ok_or_else(|| {
            Error::config(format!("partition index {} outside summary of length {}", i + 1, eta.len()))
        })?;
        values.push(*v);
        names.push(eta.labels[i].clone());
    }
    SummaryVector::new(values, names.into())
}

pub fn apply_partition(eta: &SummaryVector, part: &Partition) -> Result<(SummaryVector, SummaryVector)> {
    if part.dim() != eta.len() {
        return Err(Error::config(format!(
            "partition covers {} summaries but vector has {}",
            part.dim(),
            eta.len()
        )));
    }
    Ok((select(eta, &part.psi)?, select(eta, &part.phi)?))
}

/// Inverse of [`apply_partition`].
pub fn interleave(psi: &SummaryVector, phi: &SummaryVector, part: &Partition) -> Result<SummaryVector> {
    if psi.len() != part.psi.len() || phi.len() != part.phi.len() {
        return Err(Error::config("block lengths do not match partition"));
    }
    let d = part.dim();
    let mut values = vec![0.0; d];
    let mut names = vec![String::new(); d];
    for (k, &i) in part.psi.iter().enumerate() {
        values[i] = psi.values[k];
        names[i] = psi.labels[k].clone();
    }
    for (k, &i) in part.phi.iter().enumerate() {
        values[i] = phi.values[k];
        names[i] = phi.labels[k].clone();
    }
    SummaryVector::new(values, names.into())
}

pub fn mean_variance_summary(z: &Dataset) -> Result<SummaryVector> {
    let x = z.values();
    if x.len() < 2 {
        return Err(Error::domain("mean/variance summary needs at least 2 observations"));
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|xi| (xi - m).powi(2)).sum::<f64>() / (n - 1.0);
    SummaryVector::new(vec![m, v], labels(&["mean", "variance"]))
}

/// Uncentered autocovariances at lags 0, 1, 2 with a 1/T factor.
pub fn autocovariance_summary(z: &Dataset) -> Result<SummaryVector> {
    let x = z.values();
    if x.len() < 3 {
        return Err(Error::domain("autocovariance summary needs at least 3 observations"));
    }
    let t = x.len() as f64;
    let lag = |j: usize| x[j..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / t;
    SummaryVector::new(vec![lag(0), lag(1), lag(2)], labels(&["acov0", "acov1", "acov2"]))
}

/// Sample quantile with linear interpolation at 1-based position `1 + (n-1)q`.
pub fn sample_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Octile-based robust location, scale, skewness and kurtosis.
pub fn robust_gk_summary(z: &Dataset) -> Result<SummaryVector> {
    if z.len() < 8 {
        return Err(Error::domain("robust summary needs at least 8 observations"));
    }
    let mut sorted = z.values().to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut e = [0.0; 7];
    for (i, ei) in e.iter_mut().enumerate() {
        *ei = sample_quantile(&sorted, (i + 1) as f64 / 8.0);
    }
    if e[5] - e[1] == 0.0 {
        return Err(Error::DegenerateSummary("interquartile range is zero".into()));
    }
    SummaryVector::new(robust_from_octiles(&e).to_vec(), labels(&["S1", "S2", "S3", "S4"]))
}

/// GARCH(1,1) scale recursion with standardized-t errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxGarchParams {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
}

impl AuxGarchParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta1 > 0.0
            && self.beta2 >= 0.0
            && self.beta3 >= 0.0
            && self.beta2 + self.beta3 < 1.0
            && self.beta4 > 2.0
            && self.beta4.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid auxiliary GARCH parameters {self:?}")))
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.beta1, self.beta2, self.beta3, self.beta4]
    }

    pub fn from_array(b: [f64; 4]) -> Self {
        Self { beta1: b[0], beta2: b[1], beta3: b[2], beta4: b[3] }
    }
}

fn std_t_log_const(nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln()
}

/// Log-likelihood without parameter-box checks. The pre-sample scale and absolute return are
/// both set to the sample mean of `|r|`, so the first scale is `beta1 + (beta2 + beta3) mean|r|`.
fn garch_loglik_raw(b: &[f64; 4], r: &[f64]) -> f64 {
    let [b1, b2, b3, nu] = *b;
    if !(nu > 2.0) {
        return f64::NEG_INFINITY;
    }
    let c = std_t_log_const(nu);
    let half = 0.5 * (nu + 1.0);
    let inv = 1.0 / (nu - 2.0);
    let m = r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64;
    let (mut x, mut prev_abs) = (m, m);
    let mut total = 0.0;
    for &rt in r {
        x = b1 + b2 * prev_abs + b3 * x;
        if !(x > 0.0) || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        let e = rt / x;
        total += c - half * (e * e * inv).ln_1p() - x.ln();
        prev_abs = rt.abs();
    }
    if total.is_finite() {
        total
    } else {
        f64::NEG_INFINITY
    }
}

/// Auxiliary log-likelihood; negative infinity outside the parameter box or when the
/// recursion leaves the positive reals.
pub fn garch_loglik(beta: &AuxGarchParams, y: &Dataset) -> f64 {
    if beta.validate().is_err() {
        return f64::NEG_INFINITY;
    }
    garch_loglik_raw(&beta.to_array(), y.values())
}

fn fd_step(b: f64) -> f64 {
    1e-4 * b.abs().max(1.0)
}

/// Central-difference gradient of the total log-likelihood.
fn fd_gradient(b: &[f64; 4], r: &[f64]) -> Option<[f64; 4]> {
    let mut g = [0.0; 4];
    for i in 0..4 {
        let h = fd_step(b[i]);
        let (mut up, mut dn) = (*b, *b);
        up[i] += h;
        dn[i] -= h;
        let (fu, fd) = (garch_loglik_raw(&up, r), garch_loglik_raw(&dn, r));
        if !fu.is_finite() || !fd.is_finite() {
            return None;
        }
        g[i] = (fu - fd) / (2.0 * h);
    }
    Some(g)
}

/// Auxiliary score at `beta_hat` divided by the sample size.
pub fn garch_score_summary(z: &Dataset, beta_hat: &AuxGarchParams) -> Result<SummaryVector> {
    let g = fd_gradient(&beta_hat.to_array(), z.values())
        .ok_or_else(|| Error::Score(format!("non-finite log-likelihood near {beta_hat:?}")))?;
    let t = z.len() as f64;
    SummaryVector::new(g.iter().map(|v| v / t).collect(), labels(&["S1", "S2", "S3", "S4"]))
}

/// Same as [`garch_score_summary`] with a common multiplier on every finite-difference step.
pub fn garch_score_with_step_scale(z: &Dataset, beta_hat: &AuxGarchParams, scale: f64) -> Result<Vec<f64>> {
    let b = beta_hat.to_array();
    let r = z.values();
    let mut out = Vec::with_capacity(4);
    for i in 0..4 {
        let h = scale * fd_step(b[i]);
        let (mut up, mut dn) = (b, b);
        up[i] += h;
        dn[i] -= h;
        let (fu, fd) = (garch_loglik_raw(&up, r), garch_loglik_raw(&dn, r));
        if !fu.is_finite() || !fd.is_finite() {
            return Err(Error::Score(format!("non-finite log-likelihood near {beta_hat:?}")));
        }
        out.push((fu - fd) / (2.0 * h) / r.len() as f64);
    }
    Ok(out)
}

/// Hessian of the total log-likelihood by central differences of the gradient.
pub fn garch_hessian(beta: &AuxGarchParams, y: &Dataset) -> Option<DMatrix<f64>> {
    hessian_raw(&beta.to_array(), y.values())
}

fn hessian_raw(b: &[f64; 4], r: &[f64]) -> Option<DMatrix<f64>> {
    let b = *b;
    let mut h = DMatrix::zeros(4, 4);
    for j in 0..4 {
        let s = 10.0 * fd_step(b[j]);
        let (mut up, mut dn) = (b, b);
        up[j] += s;
        dn[j] -= s;
        let gu = fd_gradient(&up, r)?;
        let gd = fd_gradient(&dn, r)?;
        for i in 0..4 {
            h[(i, j)] = (gu[i] - gd[i]) / (2.0 * s);
        }
    }
    Some(0.5 * (&h + h.transpose()))
}

/// Unconstrained coordinates: log beta1, a two-way logit for (beta2, beta3) on the open
/// simplex, and log(beta4 - 2).
fn to_free(b: &[f64; 4]) -> [f64; 4] {
    let rest = 1.0 - b[1] - b[2];
    [b[0].ln(), (b[1] / rest).ln(), (b[2] / rest).ln(), (b[3] - 2.0).ln()]
}

fn from_free(u: &[f64]) -> [f64; 4] {
    let (e2, e3) = (u[1].exp(), u[2].exp());
    let den = 1.0 + e2 + e3;
    [u[0].exp(), e2 / den, e3 / den, 2.0 + u[3].exp()]
}

/// Deterministic start points scaled to the data.
pub fn garch_default_starts(y: &Dataset) -> Vec<AuxGarchParams> {
    let m = y.values().iter().map(|v| v.abs()).sum::<f64>() / y.len() as f64;
    [(0.10, 0.85, 8.0), (0.05, 0.90, 5.0), (0.20, 0.60, 10.0), (0.10, 0.50, 4.0), (0.30, 0.30, 20.0)]
        .into_iter()
        .map(|(b2, b3, nu)| AuxGarchParams {
            beta1: m * f64::max(1.0 - b2 - b3, 0.05),
            beta2: b2,
            beta3: b3,
            beta4: nu,
        })
        .collect()
}

/// Objective tolerance of the auxiliary GARCH simplex search.
pub const GARCH_FIT_TOL: f64 = 1e-8;

pub fn fit_garch_aux(y: &Dataset) -> Result<AuxGarchParams> {
    fit_garch_aux_from(y, &garch_default_starts(y))
}

/// Multi-start simplex search on the unconstrained coordinates followed by Newton
/// refinement of the finite-difference score.
pub fn fit_garch_aux_from(y: &Dataset, starts: &[AuxGarchParams]) -> Result<AuxGarchParams> {
    if y.len() < 50 {
        return Err(Error::domain("auxiliary GARCH fit needs at least 50 observations"));
    }
    let r = y.values();
    let t = r.len() as f64;
    let objective = |u: &[f64]| {
        let b = from_free(u);
        let ll = garch_loglik_raw(&b, r);
        if ll.is_finite() {
            -ll / t
        } else {
            f64::INFINITY
        }
    };
    let opts = NelderMeadOptions {
        f_tol: GARCH_FIT_TOL,
        max_iter: 5_000,
        initial_step: vec![0.5; 4],
        bounds: None,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut any_converged = false;
    for s in starts {
        s.validate()?;
        let mut u = to_free(&s.to_array()).to_vec();
        // A second pass from the first optimum guards against premature simplex collapse.
        let mut m = nelder_mead(objective, &u, &opts);
        u.clone_from(&m.x);
        let m2 = nelder_mead(objective, &u, &opts);
        if m2.value <= m.value {
            m = m2;
        }
        any_converged |= m.converged;
        let better = match &best {
            None => true,
            Some((bx, bv)) => {
                m.value < *bv
                    || (m.value == *bv
                        && m.x.iter().zip(bx).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne())
                            == Some(std::cmp::Ordering::Less))
            }
        };
        if better {
            best = Some((m.x, m.value));
        }
    }
    let (u, value) = best.expect("at least one start");
    let nm_point = from_free(&u);
    if !any_converged || !value.is_finite() {
        return Err(Error::Estimation { best_point: nm_point.to_vec(), best_value: -value * t, restarts: starts.len() });
    }
    Ok(AuxGarchParams::from_array(newton_polish(nm_point, r)))
}

/// Newton iterations on the finite-difference score, with step halving to stay inside the
/// parameter box and keep the score norm decreasing.
fn newton_polish(start: [f64; 4], r: &[f64]) -> [f64; 4] {
    let t = r.len() as f64;
    let score_norm = |b: &[f64; 4]| -> Option<(f64, [f64; 4])> {
        if AuxGarchParams::from_array(*b).validate().is_err() {
            return None;
        }
        let g = fd_gradient(b, r)?;
        Some((g.iter().map(|v| (v / t).powi(2)).sum::<f64>().sqrt(), g))
    };
    let mut b = start;
    let Some((mut norm, mut g)) = score_norm(&b) else { return start };
    for _ in 0..50 {
        if norm < 1e-10 {
            break;
        }
        let Some(h) = hessian_raw(&b, r) else { break };
        let Some(step) = h.lu().solve(&DVector::from_column_slice(&g)) else { break };
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let mut cand = b;
            for i in 0..4 {
                cand[i] -= scale * step[i];
            }
            if let Some((n2, g2)) = score_norm(&cand) {
                if n2 < norm && garch_loglik_raw(&cand, r) >= garch_loglik_raw(&b, r) - 1e-9 * t {
                    b = cand;
                    norm = n2;
                    g = g2;
                    moved = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !moved {
            break;
        }
    }
    b
}

/// Simulate from the auxiliary model itself, after a burn-in of 1000 steps.
pub fn simulate_garch_aux(
    beta: &AuxGarchParams,
    n: usize,
    rng: &mut crate::random::RandomStream,
) -> Result<Dataset> {
    beta.validate()?;
    let nu = beta.beta4;
    let burn = 1000;
    let mut x = beta.beta1 / (1.0 - beta.beta2 - beta.beta3);
    let mut prev_abs = x;
    let mut out = Vec::with_capacity(n);
    for t in 0..n + burn {
        x = beta.beta1 + beta.beta2 * prev_abs + beta.beta3 * x;
        let e = crate::distributions::sample_standardized_t(nu, rng)?;
        let rt = x * e;
        prev_abs = rt.abs();
        if t >= burn {
            out.push(rt);
        }
    }
    Dataset::new(out)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MeanVariance;

impl SummaryMap for MeanVariance {
    fn labels(&self) -> Arc<[String]> {
        labels(&["mean", "variance"])
    }

    fn summarize(&self, z: &Dataset) -> Result<SummaryVector> {
        mean_variance_summary(z)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Autocovariances;

impl SummaryMap for Autocovariances {
    fn labels(&self) -> Arc<[String]> {
        labels(&["acov0", "acov1", "acov2"])
    }

    fn summarize(&self, z: &Dataset) -> Result<SummaryVector> {
        autocovariance_summary(z)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RobustQuantiles;

impl SummaryMap for RobustQuantiles {
    fn labels(&self) -> Arc<[String]> {
        labels(&["S1", "S2", "S3", "S4"])
    }

    fn summarize(&self, z: &Dataset) -> Result<SummaryVector> {
        robust_gk_summary(z)
    }
}

/// Auxiliary GARCH score evaluated at a fixed parameter (normally the observed-data fit).
#[derive(Clone, Copy, Debug)]
pub struct GarchScore {
    pub beta_hat: AuxGarchParams,
}

impl SummaryMap for GarchScore {
    fn labels(&self) -> Arc<[String]> {
        labels(&["S1", "S2", "S3", "S4"])
    }

    fn summarize(&self, z: &Dataset) -> Result<SummaryVector> {
        garch_score_summary(z, &self.beta_hat)
    }
}
