use thiserror::Error;

/// Errors raised by the model, steps, solver and closed forms.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error in {op}: {reason}")]
    Domain { op: &'static str, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{stage}: dual bisection did not converge after {iterations} iterations (energy residual {residual:e})")]
    NonConvergence {
        stage: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{stage}: no convergence after {iterations} iterations")]
    Stalled { stage: &'static str, iterations: usize },

    #[error("{stage}: infeasible, minimum energy {min_energy:e} exceeds budget {budget:e}")]
    Infeasible {
        stage: &'static str,
        min_energy: f64,
        budget: f64,
    },

    #[error(transparent)]
    Condition(#[from] InfeasibleCondition),
}

/// The budget does not exceed `2B(B-1) ln 2`, so the all-twos duration formula
/// would produce a non-positive duration for some bit.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("energy budget {energy} does not exceed threshold {threshold} = 2B(B-1)ln2 for B = {bits}")]
pub struct InfeasibleCondition {
    pub bits: usize,
    pub energy: f64,
    pub threshold: f64,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(op: &'static str, reason: impl Into<String>) -> Error {
    Error::Domain {
        op,
        reason: reason.into(),
    }
}
