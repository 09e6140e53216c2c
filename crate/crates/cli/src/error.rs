use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] stochoed::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Machine-readable error written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub exit_code: i32,
    pub message: String,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Core(e) if matches!(e, stochoed::Error::GuardExceeded { .. }) => "guard",
            CliError::Core(e) if e.is_numerical() => "numerical",
            CliError::Core(stochoed::Error::Io(_)) => "io",
            CliError::Core(_) => "config",
        }
    }

    /// 2 for bad input, 3 for an enumeration refusal, 4 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "guard" => 3,
            "numerical" => 4,
            _ => 2,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            error: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        }
    }
}
