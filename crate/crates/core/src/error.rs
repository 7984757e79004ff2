use thiserror::Error;

/// Errors raised by the solvers and the convex-analysis primitives.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid function: {0}")]
    InvalidFunction(String),

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("operator not monotone plus")]
    NotMonotonePlus,

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("point is not in the set (distance {distance:e})")]
    NotInSet { distance: f64 },

    #[error("Dykstra projection did not converge on an ill-posed intersection (residual {residual:e})")]
    DykstraNonConvergence { residual: f64 },

    #[error("iteration cap {cap} exceeded before a certificate was achieved (best residual {best_residual:e})")]
    IterationCap { cap: usize, best_residual: f64 },

    #[error("step size infeasible: operator Lipschitz constant {lipschitz:e} too large for lambda {lambda:e}; use a smaller lambda")]
    StepSizeInfeasible { lipschitz: f64, lambda: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),

    #[error("unsupported: {0}")]
    Unsupported(&'static str),

    #[error("the set is not compact")]
    NonCompact,

    #[error("grid has {points} points, above the limit of {limit}")]
    GridTooLarge { points: u128, limit: u128 },

    #[error("uncertified witness: {0}")]
    UncertifiedWitness(String),

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error("malformed trace: {0}")]
    TraceFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
