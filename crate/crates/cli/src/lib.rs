//! Experiment runner and report generator for `ctxinfo`.

pub mod config;
pub mod manifest;
pub mod report;
pub mod runner;
pub mod synth;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Arm(String),
    #[error("{} arm(s) failed: {}", .0.len(), .0.join(", "))]
    ArmsFailed(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl RunError {
    /// 2 for configuration problems, 3 for failed arms, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Arm(_) | RunError::ArmsFailed(_) => 3,
            RunError::Io(_) | RunError::Other(_) => 1,
        }
    }
}
