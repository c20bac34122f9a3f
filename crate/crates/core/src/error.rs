//! Error type shared across the solver.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value in component {component} at r = {location}")]
    Eval { component: usize, location: f64 },

    #[error("singular collocation matrix (zero pivot at row {pivot_row})")]
    SingularFactorization { pivot_row: usize },

    #[error("singular matching system (condition estimate {cond_estimate:e})")]
    SingularMatching { cond_estimate: f64 },

    #[error("no convergence after {iterations} iterations (last residual {last_residual:e})")]
    NonConvergence {
        iterations: usize,
        last_residual: f64,
        /// Residual delta(tau_opt) per iteration.
        history: Vec<f64>,
    },

    #[error("integration blow-up at x = {x} (component {component})")]
    BlowUp { x: f64, component: usize },

    #[error("integrator step underflow at x = {x}")]
    StepUnderflow { x: f64 },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
