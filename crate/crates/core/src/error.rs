use thiserror::Error;

/// Errors raised by the geometry, solver and optimizer layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("assembly failure: degenerate triangle {triangle}")]
    AssemblyFailure { triangle: usize },

    #[error("solver failure after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("retraction collapsed: |m + v| = {norm:e}")]
    StepCollapse { norm: f64 },

    #[error("optimizer diverged: non-finite energy at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("resource budget exceeded at h = {h}: {nodes} grid nodes > limit {limit}")]
    BudgetExceeded { h: f64, nodes: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn geometry(msg: impl Into<String>) -> Self {
        Error::InvalidGeometry(msg.into())
    }
}
