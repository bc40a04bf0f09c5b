use nls_core::NlsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] NlsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Invalid configuration.
pub const EXIT_CONFIG: i32 = 1;
/// Solver failure budget exceeded.
pub const EXIT_SOLVER: i32 = 2;
/// A certification or check failed.
pub const EXIT_CHECK: i32 = 3;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) | CliError::Json(_) => EXIT_SOLVER,
            CliError::Core(e) => core_exit_code(e),
        }
    }

    /// Variant name of the underlying error.
    pub fn kind(&self) -> String {
        match self {
            CliError::Config(_) => "InvalidConfig".into(),
            CliError::Io(_) => "Io".into(),
            CliError::Json(_) => "Json".into(),
            CliError::Core(e) => {
                let dbg = format!("{e:?}");
                dbg.split(|c: char| !c.is_alphanumeric())
                    .next()
                    .unwrap_or("")
                    .to_string()
            }
        }
    }
}

pub fn core_exit_code(e: &NlsError) -> i32 {
    use NlsError::*;
    match e {
        InvalidSpec(_)
        | InvalidParams(_)
        | GridMismatch
        | Parse(_)
        | LambdaBelowThreshold { .. }
        | NotCritical { .. }
        | InsufficientRange(_)
        | NotStarShaped => EXIT_CONFIG,
        NoConvergence { .. }
        | SweepFailed { .. }
        | NonpositiveQuotient { .. }
        | ZeroField
        | NotSignChanging
        | DegeneratePart { .. } => EXIT_SOLVER,
        MassOutOfRange { .. }
        | NoBracket { .. }
        | CertificationFailed { .. }
        | MassAboveBarMu { .. } => EXIT_CHECK,
    }
}
