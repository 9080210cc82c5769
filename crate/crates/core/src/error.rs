//! Crate-wide error type.

/// Errors produced by model construction, solvers, extraction and simulation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("regime error: {0}")]
    Regime(String),

    #[error("no root: {0}")]
    NoRoot(String),

    /// The per-level fixed-point loop (policy update + penalized solve)
    /// exceeded its sweep budget.
    #[error("level {level}: no convergence after {iterations} sweeps (last delta {last_delta:.3e})")]
    NonConvergence {
        level: usize,
        iterations: usize,
        last_delta: f64,
    },

    /// The converged level solution dips below its obstacle by more than the
    /// obstacle tolerance.
    #[error("level {level}: solution dips {worst:.3e} below the obstacle (tolerance {tol:.3e})")]
    ObstacleViolation { level: usize, worst: f64, tol: f64 },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("inadmissible strategy: {0}")]
    Admissibility(String),

    #[error("config error: {0}")]
    Config(String),

    /// A self-check gate on an emitted artifact failed.
    #[error("invariant gate failed: {0}")]
    Gate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in error JSON emitted by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid_params",
            Error::Domain(_) => "domain",
            Error::Regime(_) => "regime",
            Error::NoRoot(_) => "no_root",
            Error::NonConvergence { .. } => "non_convergence",
            Error::ObstacleViolation { .. } => "obstacle_violation",
            Error::NotFound(_) => "not_found",
            Error::Admissibility(_) => "admissibility",
            Error::Config(_) => "config",
            Error::Gate(_) => "invariant_gate",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
