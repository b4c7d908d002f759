//! Command-line front end for the `powergame` simulator.
//!
//! Configuration is flat `key = value` text; every subcommand maps onto one
//! scenario in [`powergame::experiments`] and writes a CSV table.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("not converged: {0}")]
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::NotConverged(_) => 4,
        }
    }

    pub(crate) fn config(msg: impl fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }
}

impl From<powergame::Error> for CliError {
    fn from(e: powergame::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
