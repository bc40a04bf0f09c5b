use thiserror::Error;

/// Which sign component of a field an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Part {
    Whole,
    Positive,
    Negative,
}

impl std::fmt::Display for Part {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Part::Whole => write!(f, "whole field"),
            Part::Positive => write!(f, "positive part"),
            Part::Negative => write!(f, "negative part"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NlsError {
    #[error("invalid domain or grid: {0}")]
    InvalidSpec(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("no convergence after {iterations} iterations ({what}, last residual {residual:e})")]
    NoConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },
    #[error("nonpositive quadratic form on {part}: Q = {q:e}")]
    NonpositiveQuotient { part: Part, q: f64 },
    #[error("field is identically zero")]
    ZeroField,
    #[error(
        "lambda = {lambda} is not above the existence threshold {threshold} (+ margin {margin:e})"
    )]
    LambdaBelowThreshold {
        lambda: f64,
        threshold: f64,
        margin: f64,
    },
    #[error("field is not sign-changing")]
    NotSignChanging,
    #[error("{part} collapsed: L^p norm {norm:e} below floor {floor:e}")]
    DegeneratePart { part: Part, norm: f64, floor: f64 },
    #[error("insufficient range: {0}")]
    InsufficientRange(String),
    #[error("exponent p = {p} is not the L2-critical exponent {critical} for N = {dim}")]
    NotCritical { p: f64, critical: f64, dim: usize },
    #[error("sweep failed on {failed} of {total} samples")]
    SweepFailed { failed: usize, total: usize },
    #[error("mass {mu} exceeds the threshold {threshold}")]
    MassOutOfRange { mu: f64, threshold: f64 },
    #[error("mass curve never reaches {mu} on the sampled range (max sampled mass {max_mass})")]
    NoBracket { mu: f64, max_mass: f64 },
    #[error("certification failed at lambda = {lambda}: {reason}")]
    CertificationFailed { lambda: f64, reason: String },
    #[error("mass {mu} exceeds mu_bar = {mu_bar}")]
    MassAboveBarMu { mu: f64, mu_bar: f64 },
    #[error("domain is not star-shaped about the given center")]
    NotStarShaped,
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, NlsError>;
