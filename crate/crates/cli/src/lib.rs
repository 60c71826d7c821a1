//! Configuration-driven front end for the walk-forward engine.
//!
//! Exit codes: 1 for configuration errors, 2 for data errors, 3 for runtime failures.

pub mod commands;
pub mod config;
pub mod report;

use thiserror::Error;
use wfbt_core::signal::SignalError;
use wfbt_core::walkforward::WalkForwardError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<WalkForwardError> for CliError {
    fn from(e: WalkForwardError) -> Self {
        use WalkForwardError as W;
        let msg = e.to_string();
        match e {
            W::InvalidSpec(_) | W::Sizing(_) | W::Execution(_) => CliError::Config(msg),
            W::Signal(SignalError::InvalidLambda(_) | SignalError::InvalidParam { .. }) => CliError::Config(msg),
            W::Data(_) | W::InsufficientHistory { .. } | W::ShortTraining { .. } | W::NoWindows => CliError::Data(msg),
            W::Signal(SignalError::DegenerateTraining) => CliError::Data(msg),
            _ => CliError::Runtime(msg),
        }
    }
}
