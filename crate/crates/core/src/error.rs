use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid hyperparameters, dimensions, indices or settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A summary statistic is undefined for the given data (e.g. zero interquartile range).
    #[error("degenerate summary: {0}")]
    DegenerateSummary(String),

    /// A numerical optimizer failed to converge from every restart.
    #[error("estimation did not converge after {restarts} restarts (best objective {best_value:e})")]
    Estimation { best_point: Vec<f64>, best_value: f64, restarts: usize },

    #[error("regression adjustment failed: {0}")]
    Adjustment(String),

    #[error("proposal tuning failed: {0}")]
    Tuning(String),

    #[error("score evaluation failed: {0}")]
    Score(String),

    /// Too many simulator failures inside a sampler.
    #[error("{failed} of {total} simulations failed")]
    Run { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
