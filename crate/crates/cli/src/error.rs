use std::fmt;

/// Process exit codes, one per failure class.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const MALFORMED: i32 = 3;
    pub const VERSION: i32 = 4;
    pub const IO: i32 = 5;
    pub const CHECK_FAILED: i32 = 6;
}

#[derive(Debug)]
pub enum CliError {
    Core(pgn_core::Error),
    Config(String),
    /// A check ran to completion and reported a failure.
    Check(String),
}

impl From<pgn_core::Error> for CliError {
    fn from(e: pgn_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        use pgn_core::Error as E;
        match self {
            CliError::Config(_) => "malformed_config",
            CliError::Check(_) => "check_failed",
            CliError::Core(E::InvalidArgument(_)) => "invalid_argument",
            CliError::Core(E::Malformed(_) | E::Json(_)) => "malformed_input",
            CliError::Core(E::VersionMismatch { .. }) => "version_mismatch",
            CliError::Core(E::Io(_)) => "io",
            CliError::Core(E::ContractViolation(_)) => "contract_violation",
            CliError::Core(E::NonFinite(_)) => "non_finite",
        }
    }

    pub fn exit_code(&self) -> i32 {
        use pgn_core::Error as E;
        match self {
            CliError::Config(_) => exit::MALFORMED,
            CliError::Check(_) => exit::CHECK_FAILED,
            CliError::Core(E::InvalidArgument(_) | E::Malformed(_) | E::Json(_)) => exit::MALFORMED,
            CliError::Core(E::VersionMismatch { .. }) => exit::VERSION,
            CliError::Core(E::Io(_)) => exit::IO,
            CliError::Core(E::ContractViolation(_) | E::NonFinite(_)) => exit::INTERNAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config(m) | CliError::Check(m) => f.write_str(m),
        }
    }
}
