use hmopt_core::Error;
use thiserror::Error;

/// Failure of a command, carrying its exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid flags or unreadable input: exit 2.
    #[error("{0}")]
    Usage(String),
    /// Well-formed input that the requested operation cannot use: exit 3.
    #[error("{0}")]
    Input(String),
    /// The design problem has no feasible solution: exit 4.
    #[error("{0}")]
    Infeasible(String),
    /// Numerical or I/O failure while running: exit 5.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Infeasible(_) => 4,
            CliError::Internal(_) => 5,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidParameter(m) => CliError::Usage(m),
            Error::Format(_) | Error::SizeMismatch { .. } | Error::NonFinite { .. } | Error::EmptyInput => {
                CliError::Usage(msg)
            }
            Error::NoLpBits
            | Error::UnsupportedOrder(_)
            | Error::IndexOutOfRange { .. }
            | Error::ZeroPower
            | Error::NonPositiveScale(_)
            | Error::NonPositiveDistance(_) => CliError::Input(msg),
            Error::Infeasible { .. } | Error::NoFeasibleStart { .. } => CliError::Infeasible(msg),
            Error::LinearSolveFailure(_) | Error::NotBracketed(_) => CliError::Internal(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
