//! Std companion of `netmom-core`: CSV ingestion, the panel cache, TOML
//! configuration, a parallel bootstrap runner, report files and the
//! `netmom` command line.

pub mod cache;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod output;
pub mod runner;

pub use error::{AppError, AppResult};

/// Artifact version recorded in every output.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
