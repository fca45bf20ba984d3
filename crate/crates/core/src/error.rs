use thiserror::Error;

/// Failures raised by the numerical and algebraic routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QesError {
    #[error("argument {arg} lies within {radius:e} of a pole")]
    PoleProximity { arg: String, radius: f64 },
    #[error("series did not reach tolerance {tol:e} within {terms} terms (tail bound {tail:e})")]
    SeriesNotConverged { terms: usize, tail: f64, tol: f64 },
    #[error("division by a value within {tol:e} of zero: {what}")]
    DivisionByNearZero { what: String, tol: f64 },
    #[error("partition of length {len} does not fit in {n_vars} variables")]
    LengthExceeded { len: usize, n_vars: usize },
    #[error("polynomial division left a nonzero remainder in pair ({j}, {k})")]
    NonCancellation { j: usize, k: usize },
    #[error("input is not symmetric: {0}")]
    NotSymmetric(String),
    #[error("inadmissible gauge choice: {0}")]
    InadmissibleGauge(String),
    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),
    #[error("standing assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("point lies within {radius:e} of a branch locus: {what}")]
    BranchPointProximity { what: String, radius: f64 },
    #[error("unsupported particle number N = {0} (supported: 1..=3)")]
    UnsupportedN(usize),
    #[error("ill-conditioned collocation system (condition number {cond:e})")]
    IllConditioned { cond: f64 },
    #[error("rank deficient: achieved rank {rank} of {expected}")]
    RankDeficient { rank: usize, expected: usize },
    #[error("denominator within {tol:e} of zero: {what}")]
    DenominatorNearZero { what: String, tol: f64 },
    #[error("nome p must be nonzero")]
    ZeroNome,
    #[error("degenerate coupling constraint violated: {0}")]
    ConstraintViolated(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, QesError>;
