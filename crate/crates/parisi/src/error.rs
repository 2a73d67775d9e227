use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("exponents must be strictly increasing and at least {min}")]
    NonIncreasingExponents { min: u32 },
    #[error("weight {index} is {value}, outside [0, 1]")]
    WeightOutOfRange { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1")]
    WeightSumMismatch { sum: f64 },
    #[error("argument {value} outside the domain {what}")]
    DomainError { what: &'static str, value: f64 },
    #[error("second derivative vanishes at x = {x}")]
    SingularCurvature { x: f64 },
    #[error("kernel argument z = {z} is not positive")]
    NonpositiveZ { z: f64 },
    #[error("degenerate kernel arguments ({x}, {y}, {z})")]
    DegenerateArguments { x: f64, y: f64, z: f64 },
    #[error("chain is not strictly increasing at index {index}")]
    ChainNotStrict { index: usize },
    #[error("expected x1 < x2, got ({x1}, {x2})")]
    ArgumentOrder { x1: f64, x2: f64 },
    #[error("not found: {reason}")]
    NotFound { reason: String },
    #[error("no solution: {reason}")]
    NoSolution { reason: String },
    #[error("recovered block densities are not increasing: {m:?}")]
    NonMonotoneWeights { m: Vec<f64> },
    #[error("no candidate phase verified: {diagnostics}")]
    NoPhaseFound { diagnostics: String },
    #[error("more than one candidate phase verified: {labels}")]
    AmbiguousPhase { labels: String },
    #[error("oracle did not converge after {iterations} iterations (kkt residual {kkt})")]
    NotConverged { iterations: usize, kkt: f64 },
    #[error("cannot extract a phase: {reason}")]
    Unclassifiable { reason: String },
    #[error("invalid measure: {reason}")]
    InvalidMeasure { reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
