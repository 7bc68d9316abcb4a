use std::path::PathBuf;

/// Errors raised anywhere in the simulator.
///
/// Variants are grouped so the command-line front end can map them onto
/// exit codes: configuration problems, numerical failures and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config { message: String, line: Option<usize> },

    #[error("numerical failure at step {step}: {message}")]
    Numerical { step: usize, message: String },

    #[error("relaxation did not converge after {steps} steps (last |dE| = {last_delta:e})")]
    NoConvergence { steps: usize, last_delta: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("norm ledger violated: {0}")]
    Ledger(String),

    #[error("array file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(msg: impl Into<String>, line: Option<usize>) -> Self {
        Error::Config { message: msg.into(), line }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Config { .. } => "config",
            Error::Numerical { .. } => "numerical",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Calibration(_) => "calibration",
            Error::Ledger(_) => "ledger",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code: 2 config, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Config { .. } => 2,
            Error::Numerical { .. } | Error::NoConvergence { .. } | Error::Calibration(_) | Error::Ledger(_) => 3,
            Error::Format { .. } | Error::Io { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
