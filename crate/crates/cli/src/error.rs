use std::fmt;
use std::io;

use decoding_game::GameError;

/// Failure of a subcommand, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag values (64).
    Usage(String),
    /// Unreadable or invalid input data (65).
    Data(String),
    /// Closed-form assumption violated or instance too large (2).
    Guard(String),
    /// An oracle disagreed with the closed form (1).
    VerifyFailed(String),
    Io(io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Data(_) | CliError::Io(_) => 65,
            CliError::Guard(_) => 2,
            CliError::VerifyFailed(_) => 1,
        }
    }

    /// The message without its category prefix.
    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Guard(m) | CliError::VerifyFailed(m) => m.clone(),
            CliError::Io(e) => e.to_string(),
        }
    }

    pub fn is_broken_pipe(&self) -> bool {
        matches!(self, CliError::Io(e) if e.kind() == io::ErrorKind::BrokenPipe)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Data(m) => write!(f, "data: {m}"),
            CliError::Guard(m) => write!(f, "{m}"),
            CliError::VerifyFailed(m) => write!(f, "verification failed: {m}"),
            CliError::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<GameError> for CliError {
    fn from(e: GameError) -> Self {
        let msg = e.to_string();
        match e.root() {
            GameError::AssumptionViolated(_) | GameError::TooLarge(_) => CliError::Guard(msg),
            GameError::BadConfig(_) | GameError::BadObjective(_) => CliError::Usage(msg),
            _ => CliError::Data(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
