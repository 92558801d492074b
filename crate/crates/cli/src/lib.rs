//! Command-line harness around `qsc-core`: run configuration, reference
//! solutions, verification suites, rate fits and benchmark tables.

// parameter guards are written so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod config;
pub mod error;
pub mod fit;
pub mod problem;
pub mod reference;
pub mod report;
pub mod solve;
pub mod verify;

pub use error::{CliError, Result};
