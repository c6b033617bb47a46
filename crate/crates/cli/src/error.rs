use mlab_core::Error as CoreError;
use thiserror::Error;

/// Failure of a command, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or out-of-range configuration or input file.
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Io(String),

    /// The domain violates a hypothesis of the theory.
    #[error("{0}")]
    Hypothesis(String),

    /// Conditioning, degree cap, quadrature or other numerical failure.
    #[error("{0}")]
    Numeric(String),

    #[error("{0}")]
    InsufficientData(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io(_) => 2,
            Self::Hypothesis(_) => 3,
            Self::Numeric(_) => 4,
            Self::InsufficientData(_) => 5,
        }
    }

    /// Core error raised while computing (not while parsing).
    pub fn from_core(context: &str, e: CoreError) -> Self {
        let msg = format!("{context}: {e}");
        match e {
            CoreError::DomainHypothesis(_) => Self::Hypothesis(msg),
            CoreError::InsufficientData { .. } => Self::InsufficientData(msg),
            CoreError::ParameterDomain(_) | CoreError::Range { .. } => Self::Config(msg),
            CoreError::Conditioning { .. }
            | CoreError::DegreeCap { .. }
            | CoreError::QuadratureBudget { .. }
            | CoreError::MissingDerivative
            | CoreError::Internal(_) => Self::Numeric(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
