//! Bayesian quickest change detection for finite-state Markov chains.
//!
//! An observed chain switches from a *before* transition matrix to an
//! *after* matrix at a geometrically distributed change time. The posterior
//! probability that no change has occurred yet is computable by a scalar
//! recursion whose cost is independent of the chain dimension, and the
//! risk-optimal detector is a first-crossing threshold test on it.
//!
//! Modules:
//! - [`chain`]: transition-matrix validation, structure checks, stationary
//!   distributions, step sampling and the relative entropy rate.
//! - [`model`]: change-point model assembly, the augmented 2N-state hidden
//!   Markov model, and trajectory simulation.
//! - [`filter`]: the scalar no-change-posterior recursion and the full
//!   augmented filter it is checked against.
//! - [`detect`]: the threshold stopping rule, Bayes-risk Monte Carlo and
//!   threshold sweeps under common random numbers.
//! - [`diagnostics`]: separation verdicts, critical-parameter solving,
//!   empirical drift estimation and the no-change trap study.
//! - [`seed`]: reproducible purpose-labeled stream derivation.

#![forbid(unsafe_code)]

pub mod chain;
pub mod detect;
pub mod diagnostics;
pub mod error;
pub mod filter;
pub mod model;
pub mod seed;

pub use chain::{
    relative_entropy_rate, two_state_symmetric, ChainState, StationaryDistribution,
    StructureReport, TransitionMatrix,
};
pub use detect::{
    estimate_risk, run_detection, sweep_thresholds, sweep_thresholds_with_paths, Decision,
    DetectionResult, Detector, DetectorConfig, RiskEstimate, SweepPaths,
};
pub use diagnostics::{
    critical_parameter, estimate_drift, prior_drift_bound, separation_report, trap_study,
    CriticalParameter, DriftEstimate, SeparationReport, StudyConfig, StudyResult,
};
pub use error::{QcdError, Result};
pub use filter::{
    hmm_filter_step, run_filter, scalar_filter_step, AugmentedPosterior, FilterMode,
    PosteriorState, PosteriorTrace,
};
pub use model::{
    AugmentedModel, ChangePointModel, ChangeSpec, ChangeTime, GeometricPrior, Trajectory,
};
