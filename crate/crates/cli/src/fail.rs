use std::fmt;

/// Errors mapped to exit codes: input problems exit 2, solver breakdowns 4.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Solver(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Solver(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "error[input]: {m}"),
            CliError::Solver(m) => write!(f, "error[solver]: {m}"),
        }
    }
}

impl From<ssnal::Error> for CliError {
    fn from(e: ssnal::Error) -> Self {
        match e {
            ssnal::Error::LineSearch { .. } | ssnal::Error::Internal(_) => CliError::Solver(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
