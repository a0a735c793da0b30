use alloc::string::String;

use crate::Date;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("series too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("zero-variance window")]
    ZeroVariance,
    #[error("descriptor length must be odd and at least 3, got {0}")]
    InvalidDescriptorLength(usize),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown market id {0:?}")]
    UnknownMarket(String),
    #[error("dates not strictly ascending for {series} at {date}")]
    NonAscendingDates { series: String, date: Date },
    #[error("contract {contract} has no price on roll date {date}")]
    MissingRollPrice { contract: String, date: Date },
    #[error("insufficient history at row {row}: need {needed} defined rows")]
    InsufficientHistory { row: usize, needed: usize },
    #[error("node {0} has zero degree")]
    IsolatedNode(usize),
    #[error("graph solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("no feasible hyperparameter candidate")]
    NoFeasibleCandidate,
    #[error("invalid date {0:?}")]
    InvalidDate(String),
    #[error("resample {index}: {source}")]
    Resample { index: usize, source: alloc::boxed::Box<Error> },
}

impl Error {
    /// True for failures of an iterative numerical method, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence { .. } => true,
            Error::Resample { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
