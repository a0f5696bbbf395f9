//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, QcdError>;

/// Errors produced by model validation, filtering and Monte Carlo drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QcdError {
    #[error("transition matrix must be at least 2x2, got {n}x{n}")]
    DimensionTooSmall { n: usize },

    #[error("matrix row {row} has {len} entries, expected {n}")]
    NotSquare { row: usize, len: usize, n: usize },

    #[error("negative entry {value} at row {row}, column {column}")]
    NegativeEntry {
        row: usize,
        column: usize,
        value: f64,
    },

    #[error("entry {value} at row {row}, column {column} lies outside [0, 1]")]
    EntryOutOfRange {
        row: usize,
        column: usize,
        value: f64,
    },

    #[error("column {column} sums to {sum}, deviating from 1 by more than {tolerance:e}")]
    NonStochastic {
        column: usize,
        sum: f64,
        tolerance: f64,
    },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("chain is not ergodic (irreducible: {irreducible}, period: {period})")]
    NotErgodic { irreducible: bool, period: usize },

    #[error(
        "stationary solve did not converge in {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("state index {index} out of range for {n}-state chain")]
    StateOutOfRange { index: usize, n: usize },

    #[error("invalid change probability rho = {rho}")]
    InvalidRho { rho: f64 },

    #[error("invalid probability vector: {reason}")]
    InvalidDistribution { reason: String },

    #[error("change time must be at least 1, got {value}")]
    InvalidChangeTime { value: usize },

    #[error("horizon must be at least 1")]
    InvalidHorizon,

    #[error("invalid posterior vector: {reason}")]
    InvalidPosterior { reason: String },

    #[error("observed state {state} has zero probability under both hypothesis blocks")]
    ImpossibleObservation { state: usize },

    #[error("observed transition at step {step} has zero probability under both chains")]
    ImpossibleTransition { step: usize },

    #[error("detection threshold must lie in [0, 1], got {value}")]
    InvalidThreshold { value: f64 },

    #[error("detector already stopped at step {tau}")]
    AlreadyStopped { tau: usize },

    #[error("delay cost must be positive and finite, got {value}")]
    InvalidCost { value: f64 },

    #[error("trial count must be at least 1")]
    InvalidTrials,

    #[error("no sign change over bracket [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },

    #[error("conditioning band upper bound must lie in (0, 1), got {value}")]
    InvalidBand { value: f64 },

    #[error("no posterior excursion entered the conditioning band (samples = 0)")]
    InsufficientSamples,

    #[error("parameter grid must be nonempty")]
    EmptyGrid,
}
