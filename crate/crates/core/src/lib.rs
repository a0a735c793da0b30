//! Network momentum for futures portfolios.
//!
//! This crate holds the numerical pipeline and nothing else: lead-lag
//! detection between pairs of markets (Lévy area and a family of dynamic time
//! warping detectors), sparse graph learning on the resulting lead-lag
//! matrices, MACD-style oscillators and their network-propagated
//! counterparts, volatility-targeted positions, costed PnL accounting,
//! performance statistics, the stationary block bootstrap and the two
//! one-sided significance tests used to compare models.
//!
//! It is `no_std` and only needs `alloc`. File formats, configuration,
//! parallel experiment orchestration and the command line live in the
//! companion `netmom` crate.
#![cfg_attr(not(test), no_std)]
#![deny(rust_2018_idioms, unused_must_use)]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod backtest;
pub mod bootstrap;
pub mod date;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod leadlag;
pub mod market;
pub mod matrix;
pub mod model;
pub mod signals;
pub mod stats;
pub mod synthetic;

pub use date::Date;
pub use error::{Error, Result};
pub use matrix::Matrix;

/// Trading days per year, used for every annualisation.
pub const TRADING_DAYS: f64 = 252.0;

/// Volatility (and standard deviation) floor below which a value is treated as zero.
pub const EPS_VOL: f64 = 1e-8;
