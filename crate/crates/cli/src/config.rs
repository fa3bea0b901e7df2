//! Experiment configuration: JSON schema, defaults, validation and presets.

use std::path::{Path, PathBuf};

use rabc_core::distributions::{JointPrior, PriorSpec};
use rabc_core::models::{
    GkModel, GkParams, Ma2Model, MixtureParams, NormalLocationModel, StableSvModel, StableSvParams, SvParams,
};
use rabc_core::summaries::Partition;
use rabc_core::Simulator;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
#[error("configuration error at `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

/// The assumed model; `n` is the simulated sample size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    NormalLocation { sigma: f64, n: usize },
    Gk { n: usize },
    Ma2 { n: usize },
    StableSv { n: usize },
}

impl ModelSpec {
    pub fn simulator(&self) -> Box<dyn Simulator> {
        match *self {
            ModelSpec::NormalLocation { sigma, n } => Box::new(NormalLocationModel { sigma, n }),
            ModelSpec::Gk { n } => Box::new(GkModel { n }),
            ModelSpec::Ma2 { n } => Box::new(Ma2Model { n }),
            ModelSpec::StableSv { n } => Box::new(StableSvModel { n }),
        }
    }

    pub fn default_prior(&self) -> JointPrior {
        let u = |lo, hi| PriorSpec::Uniform { lo, hi };
        match self {
            ModelSpec::NormalLocation { .. } => {
                JointPrior::new(vec![PriorSpec::Gaussian { mean: 0.0, variance: 25.0 }]).expect("static prior")
            }
            ModelSpec::Gk { .. } => JointPrior::iid(u(0.0, 10.0), 4).expect("static prior"),
            ModelSpec::Ma2 { .. } => JointPrior::ma2_triangle(),
            ModelSpec::StableSv { .. } => {
                JointPrior::new(vec![u(0.7, 1.0), u(0.01, 1.0), u(1.0, 2.0)]).expect("static prior")
            }
        }
    }

    pub fn default_summary(&self) -> SummaryKind {
        match self {
            ModelSpec::NormalLocation { .. } => SummaryKind::MeanVariance,
            ModelSpec::Gk { .. } => SummaryKind::RobustQuantiles,
            ModelSpec::Ma2 { .. } => SummaryKind::Autocovariances,
            ModelSpec::StableSv { .. } => SummaryKind::GarchScore,
        }
    }

    fn n(&self) -> usize {
        match *self {
            ModelSpec::NormalLocation { n, .. } | ModelSpec::Gk { n } | ModelSpec::Ma2 { n } | ModelSpec::StableSv { n } => n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryKind {
    MeanVariance,
    Autocovariances,
    RobustQuantiles,
    /// Auxiliary GARCH(1,1)-t score at the observed-data fit.
    GarchScore,
}

impl SummaryKind {
    pub fn dim(self) -> usize {
        match self {
            SummaryKind::MeanVariance => 2,
            SummaryKind::Autocovariances => 3,
            SummaryKind::RobustQuantiles | SummaryKind::GarchScore => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "abc-smc")]
    AbcSmc,
    #[serde(rename = "abc-smc-reg")]
    AbcSmcReg,
    #[serde(rename = "rabc-laplace")]
    RabcLaplace,
    #[serde(rename = "rabc-spike-slab")]
    RabcSpikeSlab,
    #[serde(rename = "bsl")]
    Bsl,
    #[serde(rename = "rbsl-m")]
    RbslM,
    #[serde(rename = "rbsl-v")]
    RbslV,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::AbcSmc,
        Algorithm::AbcSmcReg,
        Algorithm::RabcLaplace,
        Algorithm::RabcSpikeSlab,
        Algorithm::Bsl,
        Algorithm::RbslM,
        Algorithm::RbslV,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::AbcSmc => "abc-smc",
            Algorithm::AbcSmcReg => "abc-smc-reg",
            Algorithm::RabcLaplace => "rabc-laplace",
            Algorithm::RabcSpikeSlab => "rabc-spike-slab",
            Algorithm::Bsl => "bsl",
            Algorithm::RbslM => "rbsl-m",
            Algorithm::RbslV => "rbsl-v",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn is_rabc(self) -> bool {
        matches!(self, Algorithm::RabcLaplace | Algorithm::RabcSpikeSlab)
    }
}

/// True data-generating process for synthetic data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dgp {
    Normal { theta: f64, sigma: f64 },
    Mixture(MixtureParams),
    Gk(GkParams),
    Ma2 { theta1: f64, theta2: f64 },
    Sv(SvParams),
    StableSv(StableSvParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Fresh data per replication from `dgp`.
    Synthetic { dgp: Dgp, n: usize },
    /// One column of a CSV file with a header row, used for every replication.
    Csv { path: PathBuf, column: String },
}

/// Algorithm hyperparameters; every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// SMC particle count.
    pub n: usize,
    /// Step-one prior draws.
    pub n1: usize,
    pub retain_fraction: f64,
    /// Fixed step-one tolerance; overrides `retain_fraction` when set.
    pub step_one_tolerance: Option<f64>,
    /// Simulations per synthetic-likelihood estimate.
    pub m: usize,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    /// Laplace scale of the adjustment prior (slab scale for spike-and-slab).
    pub lambda: f64,
    /// Spike probability.
    pub p: f64,
    pub p_acc_min: f64,
    pub alpha: f64,
    pub r_init: usize,
    pub c_moves: f64,
    pub proposal_scale: f64,
    pub max_iterations: usize,
    /// Starting point for the synthetic-likelihood chains; prior mean when absent.
    pub init_theta: Option<Vec<f64>>,
    pub theta_step: Option<Vec<f64>>,
    pub gamma_step: f64,
    pub adapt_every: usize,
    /// Adjustment prior for the synthetic-likelihood variants; Laplace(0, 0.5) for
    /// mean adjustment and exponential(0.5) for variance adjustment when absent.
    pub bsl_gamma_prior: Option<PriorSpec>,
    pub n_perm: usize,
    /// Significance level for the adjustment-component tests.
    pub test_level: f64,
    /// Credible level for coverage.
    pub credible_level: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            n: 1000,
            n1: 25_000,
            retain_fraction: 0.05,
            step_one_tolerance: None,
            m: 50,
            iters: 10_000,
            burnin: 5_000,
            thin: 5,
            lambda: 0.125,
            p: 0.5,
            p_acc_min: 0.01,
            alpha: 0.5,
            r_init: 5,
            c_moves: 0.01,
            proposal_scale: 1.0,
            max_iterations: 500,
            init_theta: None,
            theta_step: None,
            gamma_step: 0.1,
            adapt_every: 100,
            bsl_gamma_prior: None,
            n_perm: 999,
            test_level: 0.05,
            credible_level: 0.95,
        }
    }
}

/// One-based partition as written in configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub psi: Vec<usize>,
    #[serde(default)]
    pub phi: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub model: ModelSpec,
    #[serde(default)]
    pub prior: Option<JointPrior>,
    #[serde(default)]
    pub summary: Option<SummaryKind>,
    #[serde(default)]
    pub partition: Option<PartitionSpec>,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub settings: Settings,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub data: Option<DataSource>,
    /// Target for coverage and bias.
    #[serde(default)]
    pub pseudo_true: Option<Vec<f64>>,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Worker threads; all available cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_name() -> String {
    "experiment".into()
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("rabc-output")
}

impl ExperimentConfig {
    /// Fill model-dependent defaults so the echoed config is fully explicit.
    pub fn with_defaults(mut self) -> Self {
        if self.prior.is_none() {
            self.prior = Some(self.model.default_prior());
        }
        if self.summary.is_none() {
            self.summary = Some(self.model.default_summary());
        }
        let dim = self.summary_kind().dim();
        if self.partition.is_none() {
            self.partition = Some(PartitionSpec { psi: (1..=dim).collect(), phi: Vec::new() });
        }
        if self.data.is_none() {
            self.data = Some(DataSource::Synthetic { dgp: self.default_dgp(), n: self.model.n() });
        }
        self
    }

    fn default_dgp(&self) -> Dgp {
        match self.model {
            ModelSpec::NormalLocation { sigma, .. } => Dgp::Normal { theta: 1.0, sigma },
            ModelSpec::Gk { .. } => Dgp::Mixture(DEFAULT_MIXTURE),
            ModelSpec::Ma2 { .. } => Dgp::Sv(DEFAULT_SV),
            ModelSpec::StableSv { .. } => {
                Dgp::StableSv(STABLE_SV_POINT)
            }
        }
    }

    pub fn summary_kind(&self) -> SummaryKind {
        self.summary.unwrap_or_else(|| self.model.default_summary())
    }

    pub fn joint_prior(&self) -> JointPrior {
        self.prior.clone().unwrap_or_else(|| self.model.default_prior())
    }

    pub fn partition(&self) -> Result<Partition, ConfigError> {
        let dim = self.summary_kind().dim();
        match &self.partition {
            None => Ok(Partition::all_psi(dim)),
            Some(p) => {
                if let Some(bad) = p.psi.iter().chain(&p.phi).find(|&&i| i == 0 || i > dim) {
                    return Err(ConfigError::new(
                        "partition",
                        format!("summary index {bad} does not exist (summaries are numbered 1..={dim})"),
                    ));
                }
                Partition::from_one_based(&p.psi, &p.phi, dim)
                    .map_err(|e| ConfigError::new("partition", e.to_string()))
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.settings;
        let check = |ok: bool, field: &str, msg: String| if ok { Ok(()) } else { Err(ConfigError::new(field, msg)) };
        check(self.replications >= 1, "replications", "must be at least 1".into())?;
        let prior = self.joint_prior();
        let sim = self.model.simulator();
        check(
            prior.dim() == sim.param_dim(),
            "prior",
            format!("{} components for a model with {} parameters", prior.dim(), sim.param_dim()),
        )?;
        for (i, c) in prior.components.iter().enumerate() {
            c.validate().map_err(|e| ConfigError::new(format!("prior.components[{i}]"), e.to_string()))?;
        }
        let part = self.partition()?;
        if self.algorithm.is_rabc() {
            check(!part.phi().is_empty(), "partition", "robust ABC needs a non-empty phi block".into())?;
        }
        check(s.n >= 10, "settings.n", format!("{} is too small", s.n))?;
        check(s.alpha > 0.0 && s.alpha < 1.0, "settings.alpha", format!("{} outside (0, 1)", s.alpha))?;
        check(s.p_acc_min > 0.0 && s.p_acc_min < 1.0, "settings.p_acc_min", format!("{} outside (0, 1)", s.p_acc_min))?;
        check(s.c_moves > 0.0 && s.c_moves < 1.0, "settings.c_moves", format!("{} outside (0, 1)", s.c_moves))?;
        check(s.r_init >= 1, "settings.r_init", "must be positive".into())?;
        check(s.proposal_scale > 0.0, "settings.proposal_scale", "must be positive".into())?;
        check(s.lambda > 0.0, "settings.lambda", format!("{} must be positive", s.lambda))?;
        check(s.p > 0.0 && s.p < 1.0, "settings.p", format!("{} outside (0, 1)", s.p))?;
        check(
            s.retain_fraction > 0.0 && s.retain_fraction <= 1.0,
            "settings.retain_fraction",
            format!("{} outside (0, 1]", s.retain_fraction),
        )?;
        if let Some(e) = s.step_one_tolerance {
            check(e >= 0.0 && e.is_finite(), "settings.step_one_tolerance", format!("{e} must be finite and non-negative"))?;
        }
        if self.algorithm.is_rabc() {
            check(s.n1 >= 1000, "settings.n1", format!("{} is below 1000", s.n1))?;
        }
        check(s.iters > s.burnin, "settings.iters", "must exceed settings.burnin".into())?;
        check(s.thin >= 1, "settings.thin", "must be positive".into())?;
        check(s.m >= self.summary_kind().dim() + 2, "settings.m", "must be at least the summary dimension + 2".into())?;
        check(s.gamma_step > 0.0, "settings.gamma_step", "must be positive".into())?;
        check(s.adapt_every >= 1, "settings.adapt_every", "must be positive".into())?;
        if let Some(g) = &s.bsl_gamma_prior {
            g.validate().map_err(|e| ConfigError::new("settings.bsl_gamma_prior", e.to_string()))?;
        }
        check(s.n_perm >= 999, "settings.n_perm", format!("{} is below 999", s.n_perm))?;
        check(s.test_level > 0.0 && s.test_level < 1.0, "settings.test_level", "outside (0, 1)".into())?;
        check(s.credible_level > 0.0 && s.credible_level < 1.0, "settings.credible_level", "outside (0, 1)".into())?;
        if let Some(t) = &s.init_theta {
            check(t.len() == prior.dim(), "settings.init_theta", format!("length {} for {} parameters", t.len(), prior.dim()))?;
            check(prior.contains(t), "settings.init_theta", "outside the prior support".into())?;
        }
        if let Some(t) = &s.theta_step {
            check(t.len() == prior.dim() && t.iter().all(|v| *v > 0.0), "settings.theta_step", "needs one positive step per parameter".into())?;
        }
        if let Some(t) = &self.pseudo_true {
            check(t.len() == prior.dim(), "pseudo_true", format!("length {} for {} parameters", t.len(), prior.dim()))?;
        }
        if let Some(w) = self.workers {
            check(w >= 1, "workers", "must be positive".into())?;
        }
        if let Some(DataSource::Synthetic { n, .. }) = &self.data {
            check(*n >= 8, "data.n", format!("{n} observations is too few"))?;
        }
        Ok(())
    }
}

/// Parse, default and validate a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.to_string();
        let field = if path == "." { missing_field(&msg).unwrap_or_else(|| "config".into()) } else { path };
        ConfigError::new(field, msg)
    })?;
    let cfg = cfg.with_defaults();
    cfg.validate()?;
    Ok(cfg)
}

fn missing_field(msg: &str) -> Option<String> {
    msg.strip_prefix("missing field `").and_then(|r| r.split('`').next()).map(String::from)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub const DEFAULT_MIXTURE: MixtureParams = MixtureParams { w: 0.6, mu1: 1.0, var1: 2.0, mu2: 7.0, var2: 2.0 };
pub const DEFAULT_SV: SvParams = SvParams { omega: -0.76, rho: 0.90, sigma_v: 0.36 };

/// Synthetic stable-SV point whose auxiliary GARCH fit is interior at n = 2000.
pub const STABLE_SV_POINT: StableSvParams = StableSvParams { theta2: 0.9, theta3: 0.4, theta4: 1.8 };

pub const PRESETS: [&str; 4] = ["normal-toy", "ma2", "gnk", "stable-sv"];

/// Built-in designs at desk scale; the algorithm defaults to spike-and-slab robust ABC.
pub fn preset(name: &str, algorithm: Option<Algorithm>, seed: u64) -> Result<ExperimentConfig, ConfigError> {
    let algorithm = algorithm.unwrap_or(Algorithm::RabcSpikeSlab);
    let base = |model, partition: PartitionSpec, replications, data, pseudo_true, settings| ExperimentConfig {
        name: name.to_string(),
        model,
        prior: None,
        summary: None,
        partition: Some(partition),
        algorithm,
        settings,
        replications,
        data: Some(data),
        pseudo_true,
        seed,
        output_dir: PathBuf::from(format!("rabc-output/{name}")),
        workers: None,
    };
    let cfg = match name {
        "normal-toy" => base(
            ModelSpec::NormalLocation { sigma: 1.0, n: 100 },
            PartitionSpec { psi: vec![1], phi: vec![2] },
            50,
            DataSource::Synthetic { dgp: Dgp::Normal { theta: 1.0, sigma: 2.0 }, n: 100 },
            Some(vec![1.0]),
            Settings { n1: 20_000, n: 1000, iters: 6000, burnin: 1000, ..Settings::default() },
        ),
        "ma2" => base(
            ModelSpec::Ma2 { n: 1000 },
            PartitionSpec { psi: vec![3], phi: vec![1, 2] },
            20,
            DataSource::Synthetic { dgp: Dgp::Sv(DEFAULT_SV), n: 1000 },
            Some(vec![0.0, 0.0]),
            Settings {
                n1: 25_000,
                n: 1000,
                m: 50,
                iters: 6000,
                burnin: 1000,
                thin: 5,
                init_theta: Some(vec![0.0, 0.0]),
                ..Settings::default()
            },
        ),
        "gnk" => base(
            ModelSpec::Gk { n: 2000 },
            PartitionSpec { psi: vec![3], phi: vec![1, 2, 4] },
            10,
            DataSource::Synthetic { dgp: Dgp::Mixture(DEFAULT_MIXTURE), n: 2000 },
            Some(vec![2.3663, 4.1757, 1.7850, 0.1001]),
            Settings {
                n1: 25_000,
                n: 1000,
                iters: 10_000,
                burnin: 5000,
                thin: 5,
                init_theta: Some(vec![2.3663, 4.1757, 1.7850, 0.1001]),
                ..Settings::default()
            },
        ),
        "stable-sv" => base(
            ModelSpec::StableSv { n: 2000 },
            PartitionSpec { psi: vec![1], phi: vec![2, 3, 4] },
            1,
            DataSource::Synthetic {
                dgp: Dgp::StableSv(STABLE_SV_POINT),
                n: 2000,
            },
            Some(vec![STABLE_SV_POINT.theta2, STABLE_SV_POINT.theta3, STABLE_SV_POINT.theta4]),
            Settings {
                n1: 10_000,
                n: 500,
                m: 50,
                iters: 3000,
                burnin: 1000,
                thin: 2,
                init_theta: Some(vec![0.85, 0.5, 1.5]),
                ..Settings::default()
            },
        ),
        other => {
            return Err(ConfigError::new(
                "preset",
                format!("unknown preset `{other}`; available: {}", PRESETS.join(", ")),
            ))
        }
    };
    let cfg = cfg.with_defaults();
    cfg.validate()?;
    Ok(cfg)
}
