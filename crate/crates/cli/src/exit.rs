//! Error-to-exit-code mapping shared by all subcommands.

use gotalign_core::Error as CoreError;

pub const USAGE: i32 = 1;
pub const DATA: i32 = 2;
pub const CONVERGENCE: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Bad flag combinations or values clap cannot catch.
    Usage(String),
    Core(CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => USAGE,
            CliError::Core(e) => match e {
                CoreError::NonConvergence { .. }
                | CoreError::MaskedNonConvergence { .. }
                | CoreError::NonFiniteGradient { .. }
                | CoreError::NonFiniteLoss { .. }
                | CoreError::RejectionSamplingFailed { .. } => CONVERGENCE,
                _ => DATA,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(CoreError::Io(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;
