//! Command implementations for the `curricula` binary.
//!
//! Each command is a plain function so tests can drive it without spawning a
//! process. Failures carry the exit code the binary should return.

use std::fmt;

pub mod commands;
pub mod config;

pub use commands::{cmd_bench, cmd_compare, cmd_prepare, cmd_report, cmd_run, Global};
pub use config::RunConfig;

/// Exit code 2: bad input or configuration.
pub const EXIT_INPUT: i32 = 2;
/// Exit code 3: training failed.
pub const EXIT_TRAINING: i32 = 3;
/// Exit code 4: comparison inputs incomplete.
pub const EXIT_COMPARE: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(e: impl fmt::Display) -> Self {
        Self {
            code: EXIT_INPUT,
            message: e.to_string(),
        }
    }

    pub fn training(e: impl fmt::Display) -> Self {
        Self {
            code: EXIT_TRAINING,
            message: e.to_string(),
        }
    }

    pub fn compare(e: impl fmt::Display) -> Self {
        Self {
            code: EXIT_COMPARE,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}
