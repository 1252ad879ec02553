use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// A configuration problem, located at a line of the config file or at a
/// command-line override.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub location: Location,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Location {
    Line(usize),
    Override(String),
    Unknown,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.location {
            Location::Line(l) => write!(f, "line {l}: {}", self.message),
            Location::Override(o) => write!(f, "override --{o}: {}", self.message),
            Location::Unknown => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration:\n{}", list(.0))]
    Config(Vec<ConfigIssue>),

    #[error(transparent)]
    Core(#[from] brwp_core::Error),

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("validation failed: {0}")]
    Validation(String),
}

fn list(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl HarnessError {
    pub fn config(message: impl Into<String>) -> Self {
        HarnessError::Config(vec![ConfigIssue {
            location: Location::Unknown,
            message: message.into(),
        }])
    }

    /// Process exit code: 2 config, 3 numeric abort, 4 validation failure,
    /// 1 for I/O trouble.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Core(brwp_core::Error::Config(_)) => 2,
            HarnessError::Core(brwp_core::Error::Usage(_)) => 2,
            HarnessError::Core(_) => 3,
            HarnessError::Io { .. } => 1,
            HarnessError::Validation(_) => 4,
        }
    }
}
