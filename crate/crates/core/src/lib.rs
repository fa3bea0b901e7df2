//! Misspecification-robust approximate Bayesian computation.
//!
//! Rejection and SMC ABC, the two-step robust ABC sampler with Laplace or spike-and-slab
//! adjustment priors, robust Bayesian synthetic likelihood, and diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abc;
pub mod bsl;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod models;
pub mod optim;
pub mod rabc;
pub mod random;
pub mod smc;
pub mod summaries;

pub use abc::{AbcProblem, Particle, ParticleSet, Retention};
pub use bsl::{BslConfig, BslOutput, BslVariant};
pub use diagnostics::McMetrics;
pub use distributions::{JointPrior, PriorSpec, SupportConstraint};
pub use error::{Error, Result};
pub use models::{Dataset, Simulator};
pub use rabc::{GammaPriorKind, RabcResult, RabcSettings};
pub use random::RandomStream;
pub use smc::{SmcConfig, SmcOutput, TraceRecord};
pub use summaries::{Partition, SummaryMap, SummaryVector};
