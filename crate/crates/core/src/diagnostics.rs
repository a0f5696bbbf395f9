//! Separation diagnostics for the no-change posterior.
//!
//! When the relative entropy rate from the before chain to the after chain
//! falls below the prior's per-step log-odds drift `ln(1/(1-rho))`, the
//! log posterior acquires a negative conditional drift at small posterior
//! values even when no change has occurred: the statistic gets trapped and
//! grows ever more confident of a change that never happened. This module
//! computes the separation verdict, solves for the critical parameter of a
//! chain family, estimates the in-band drift empirically, and reproduces
//! the no-change trap frequency study.

use rayon::prelude::*;

use crate::chain::{relative_entropy_rate, TransitionMatrix};
use crate::error::{QcdError, Result};
use crate::filter::{scalar_filter_step, PosteriorState};
use crate::model::{ChangePointModel, ChangeSpec, GeometricPrior};
use crate::seed;

/// Separation verdict comparing both entropy rates to the prior bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationReport {
    /// Rate from the before chain to the after chain (drives the verdict).
    pub rate_before_after: f64,
    /// Rate in the opposite direction (reported for context).
    pub rate_after_before: f64,
    /// `ln(1 / (1 - rho))`.
    pub prior_bound: f64,
    /// `rate_before_after - prior_bound`.
    pub margin: f64,
    /// True when the margin is nonnegative.
    pub sufficiently_separated: bool,
}

/// Compare the model's entropy rates against the prior bound.
///
/// Requires both chains ergodic (the diagnostics lean on unique stationary
/// distributions; the filter itself does not).
pub fn separation_report(model: &ChangePointModel) -> Result<SeparationReport> {
    for matrix in [model.before(), model.after()] {
        let report = matrix.structure();
        if !(report.irreducible && report.aperiodic) {
            return Err(QcdError::NotErgodic {
                irreducible: report.irreducible,
                period: report.period,
            });
        }
    }
    let rate_before_after = relative_entropy_rate(model.before(), model.after())?;
    let rate_after_before = relative_entropy_rate(model.after(), model.before())?;
    let prior_bound = prior_drift_bound(model.prior());
    let margin = rate_before_after - prior_bound;
    Ok(SeparationReport {
        rate_before_after,
        rate_after_before,
        prior_bound,
        margin,
        sufficiently_separated: margin >= 0.0,
    })
}

/// `ln(1 / (1 - rho))`, computed as `-ln_1p(-rho)` for small-rho accuracy.
pub fn prior_drift_bound(prior: GeometricPrior) -> f64 {
    -(-prior.rho()).ln_1p()
}

/// Root of `rate(theta) = prior bound` for a parameterised after-chain
/// family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalParameter {
    /// Parameter value at which the separation margin changes sign.
    pub value: f64,
    /// Residual `|rate(value) - bound|` after bisection.
    pub residual: f64,
    /// Whether the margin looked monotone over sampled bracket points;
    /// false is a warning that the root may not be unique.
    pub monotone: bool,
}

/// Bisection solve of `rate(before | family(theta)) = ln(1/(1-rho))`.
///
/// The bracket endpoints must straddle the bound. Stops once the bracket
/// width is below 1e-6 and the rate residual below 1e-9 (or the bracket
/// has collapsed to adjacent floats).
pub fn critical_parameter<F>(
    before: &TransitionMatrix,
    family: F,
    prior: GeometricPrior,
    bracket: (f64, f64),
) -> Result<CriticalParameter>
where
    F: Fn(f64) -> Result<TransitionMatrix>,
{
    let bound = prior_drift_bound(prior);
    let margin = |theta: f64| -> Result<f64> {
        let after = family(theta)?;
        Ok(relative_entropy_rate(before, &after)? - bound)
    };
    let (mut lo, mut hi) = bracket;
    let mut margin_lo = margin(lo)?;
    let margin_hi = margin(hi)?;
    if margin_lo == 0.0 {
        return Ok(CriticalParameter {
            value: lo,
            residual: 0.0,
            monotone: true,
        });
    }
    if margin_hi == 0.0 {
        return Ok(CriticalParameter {
            value: hi,
            residual: 0.0,
            monotone: true,
        });
    }
    if margin_lo.signum() == margin_hi.signum() {
        return Err(QcdError::NoRoot { lo, hi });
    }

    // Sampled monotonicity probe across the bracket.
    let samples = 17;
    let mut previous = margin_lo;
    let mut non_increasing = true;
    let mut non_decreasing = true;
    for i in 1..samples {
        let theta = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
        let value = margin(theta)?;
        if value > previous {
            non_increasing = false;
        }
        if value < previous {
            non_decreasing = false;
        }
        previous = value;
    }
    let monotone = non_increasing || non_decreasing;

    let mut mid = 0.5 * (lo + hi);
    let mut margin_mid = margin(mid)?;
    for _ in 0..200 {
        if (hi - lo) <= 1e-6 && margin_mid.abs() <= 1e-9 {
            break;
        }
        if margin_mid == 0.0 {
            break;
        }
        if margin_mid.signum() == margin_lo.signum() {
            lo = mid;
            margin_lo = margin_mid;
        } else {
            hi = mid;
        }
        let next = 0.5 * (lo + hi);
        if next == lo || next == hi {
            break;
        }
        mid = next;
        margin_mid = margin(mid)?;
    }
    Ok(CriticalParameter {
        value: mid,
        residual: margin_mid.abs(),
        monotone,
    })
}

/// Empirical conditional drift of the log posterior inside a band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEstimate {
    /// Upper edge of the conditioning band `(0, band_upper]`.
    pub band_upper: f64,
    /// Mean of the log step multiplier over in-band steps.
    pub mean_log_multiplier: f64,
    /// Standard error of that mean.
    pub std_error: f64,
    /// Theoretical in-band ceiling `ln(1-rho) + rate(before | after)`.
    pub drift_bound: f64,
    /// Number of in-band steps that contributed.
    pub samples: usize,
}

/// Estimate the conditional mean of the log step multiplier on steps whose
/// previous posterior lies in `(0, band_upper]`.
///
/// Trials simulate under the averaged measure (change time sampled from
/// the prior) and samples are collected only after a burn-in, which
/// defaults to `ceil(10 / rho)` steps so the active chain is near its
/// stationary law. Assumes the model's initial distribution is the before
/// chain's stationary law; the burn-in makes the estimate insensitive to
/// mild violations.
pub fn estimate_drift(
    model: &ChangePointModel,
    band_upper: f64,
    trials: usize,
    horizon: usize,
    burn_in: Option<usize>,
    master_seed: u64,
) -> Result<DriftEstimate> {
    if !band_upper.is_finite() || band_upper <= 0.0 || band_upper >= 1.0 {
        return Err(QcdError::InvalidBand { value: band_upper });
    }
    if trials == 0 {
        return Err(QcdError::InvalidTrials);
    }
    if horizon == 0 {
        return Err(QcdError::InvalidHorizon);
    }
    for matrix in [model.before(), model.after()] {
        let report = matrix.structure();
        if !(report.irreducible && report.aperiodic) {
            return Err(QcdError::NotErgodic {
                irreducible: report.irreducible,
                period: report.period,
            });
        }
    }
    let burn_in = burn_in.unwrap_or_else(|| (10.0 / model.prior().rho()).ceil() as usize);

    let per_trial: Vec<Result<Vec<f64>>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = seed::derive(master_seed, "drift-trial", &[trial as u64]);
            let trajectory = model.simulate(horizon, ChangeSpec::Sample, &mut rng)?;
            let states = trajectory.states();
            let mut posterior = PosteriorState::initial(states[0]);
            let mut logs = Vec::new();
            for &obs in &states[1..] {
                let in_band = posterior.no_change > 0.0 && posterior.no_change <= band_upper;
                let next = scalar_filter_step(model, &posterior, obs)?;
                if in_band && next.step > burn_in {
                    logs.push(next.step_multiplier.ln());
                }
                posterior = next;
            }
            Ok(logs)
        })
        .collect();

    let mut samples = Vec::new();
    for trial in per_trial {
        samples.extend(trial?);
    }
    if samples.is_empty() {
        return Err(QcdError::InsufficientSamples);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let variance = if samples.len() < 2 {
        0.0
    } else {
        samples
            .iter()
            .map(|&x| (x - mean) * (x - mean))
            .sum::<f64>()
            / (n - 1.0)
    };
    let drift_bound =
        (-model.prior().rho()).ln_1p() + relative_entropy_rate(model.before(), model.after())?;
    Ok(DriftEstimate {
        band_upper,
        mean_log_multiplier: mean,
        std_error: (variance / n).sqrt(),
        drift_bound,
        samples: samples.len(),
    })
}

/// Monte Carlo sizing of a no-change trap study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    pub trials: usize,
    pub horizon: usize,
    /// Reporting threshold applied to the terminal posterior.
    pub h_report: f64,
}

/// Trap frequencies across a parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub parameter_grid: Vec<f64>,
    /// Per-parameter fraction of no-change trials whose terminal posterior
    /// stayed above `h_report` (it collapses toward zero in the trap).
    pub trap_frequency: Vec<f64>,
    pub trials: usize,
    pub horizon: usize,
    pub h_report: f64,
}

/// For each grid parameter, simulate no-change trajectories, run the
/// scalar filter and record the fraction of trials whose terminal
/// posterior exceeds the reporting threshold.
///
/// Streams derive from `(master seed, parameter bits, trial index)`, so
/// extending or reordering the grid never perturbs existing trials.
pub fn trap_study<F>(
    before: &TransitionMatrix,
    family: F,
    grid: &[f64],
    prior: GeometricPrior,
    config: &StudyConfig,
    master_seed: u64,
) -> Result<StudyResult>
where
    F: Fn(f64) -> Result<TransitionMatrix> + Sync,
{
    if grid.is_empty() {
        return Err(QcdError::EmptyGrid);
    }
    if config.trials == 0 {
        return Err(QcdError::InvalidTrials);
    }
    if config.horizon == 0 {
        return Err(QcdError::InvalidHorizon);
    }
    if !config.h_report.is_finite() || !(0.0..=1.0).contains(&config.h_report) {
        return Err(QcdError::InvalidThreshold {
            value: config.h_report,
        });
    }

    let mut trap_frequency = Vec::with_capacity(grid.len());
    for &parameter in grid {
        let after = family(parameter)?;
        let model = ChangePointModel::new(before.clone(), after, prior)?;
        let survived: Vec<Result<bool>> = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = seed::derive(
                    master_seed,
                    "study-trial",
                    &[parameter.to_bits(), trial as u64],
                );
                let trajectory = model.simulate(config.horizon, ChangeSpec::Never, &mut rng)?;
                let states = trajectory.states();
                let mut posterior = PosteriorState::initial(states[0]);
                for &obs in &states[1..] {
                    posterior = scalar_filter_step(&model, &posterior, obs)?;
                }
                Ok(posterior.no_change > config.h_report)
            })
            .collect();
        let mut count = 0usize;
        for outcome in survived {
            if outcome? {
                count += 1;
            }
        }
        trap_frequency.push(count as f64 / config.trials as f64);
    }
    Ok(StudyResult {
        parameter_grid: grid.to_vec(),
        trap_frequency,
        trials: config.trials,
        horizon: config.horizon,
        h_report: config.h_report,
    })
}
