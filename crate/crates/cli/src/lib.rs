//! Command implementations behind the `eakf` binary.

pub mod assimilate;
pub mod csvio;
pub mod demo;
pub mod instance;
pub mod twin;
pub mod verify;

use thiserror::Error;

/// Invalid command configuration (exit code 2).
#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
