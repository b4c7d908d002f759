use crate::linsys::ReceiverKind;

/// Errors raised by the solvers and models in this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{what} is outside its domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("root function has no sign change on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("iteration did not converge within {iterations} steps")]
    NoConvergence { iterations: usize },

    #[error("{kind} receiver is infeasible at load {alpha} (requires load < {bound})")]
    Infeasible { kind: ReceiverKind, alpha: f64, bound: f64 },

    #[error("user {user} has zero output SIR and cannot reach the target")]
    ZeroSir { user: usize },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    Rank { condition: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
