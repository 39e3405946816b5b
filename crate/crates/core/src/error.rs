use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input failed validation (shape mismatch, out-of-range parameter, bad probabilities, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An iterative solver hit its iteration cap before reaching the requested tolerance.
    #[error("solver did not converge after {iterations} iterations (last residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    /// The environment cannot be exported as a tabular MDP (state count above the cap).
    #[error("tabular export unavailable: {states} states exceeds cap {cap}")]
    ExportUnavailable { states: usize, cap: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) | Error::Parse { .. } | Error::ExportUnavailable { .. } => {
                "validation"
            }
            Error::SolverFailure { .. } => "solver",
            Error::Io(_) => "io",
        }
    }
}
