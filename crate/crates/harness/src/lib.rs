//! Experiment runner for `cubic-gda`: configuration, artifacts and the
//! acceptance suite behind the `cubic-gda` binary.

pub mod acceptance;
pub mod config;
pub mod experiment;
pub mod output;
pub mod problems;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// 2 for usage errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl From<cubic_gda::Error> for HarnessError {
    fn from(e: cubic_gda::Error) -> Self {
        if e.is_usage() {
            Self::Usage(e.to_string())
        } else {
            Self::Numeric(e.to_string())
        }
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        Self::Numeric(format!("serialisation failed: {e}"))
    }
}
