//! Threshold stopping rule and Bayes-risk Monte Carlo estimation.
//!
//! The detector alarms at the first step `k >= 1` with no-change posterior
//! `<= h` (inclusive comparison). Risk estimation scores each trial with
//! `c * max(0, tau - nu)` for delay plus an indicator of `tau < nu` for a
//! false alarm; threshold sweeps reuse the same trajectories across
//! thresholds (common random numbers), which makes the pathwise
//! monotonicity of first-crossing times exactly testable.

use rayon::prelude::*;

use crate::chain::ChainState;
use crate::error::{QcdError, Result};
use crate::filter::{scalar_filter_step, PosteriorState};
use crate::model::{ChangePointModel, ChangeSpec, ChangeTime, Trajectory};
use crate::seed;

/// Label used to derive per-trial streams for risk estimation.
const TRIAL_STREAM_LABEL: &str = "risk-trial";

/// Model plus detection threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    model: ChangePointModel,
    threshold: f64,
}

impl DetectorConfig {
    pub fn new(model: ChangePointModel, threshold: f64) -> Result<Self> {
        if !threshold.is_finite() || !(0.0..=1.0).contains(&threshold) {
            return Err(QcdError::InvalidThreshold { value: threshold });
        }
        Ok(Self { model, threshold })
    }

    pub fn model(&self) -> &ChangePointModel {
        &self.model
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Decision returned by one detector step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Alarm,
}

/// Online detector: advances the scalar filter and applies the threshold.
///
/// The initial posterior (exactly 1 at step 0) is never tested, so an
/// alarm index is always >= 1. Stepping a detector that has already
/// alarmed is an error.
#[derive(Debug, Clone)]
pub struct Detector<'a> {
    config: &'a DetectorConfig,
    state: PosteriorState,
    alarm: Option<(usize, f64)>,
}

impl<'a> Detector<'a> {
    pub fn new(config: &'a DetectorConfig, initial_observation: ChainState) -> Self {
        Self {
            config,
            state: PosteriorState::initial(initial_observation),
            alarm: None,
        }
    }

    pub fn state(&self) -> &PosteriorState {
        &self.state
    }

    /// `(tau, posterior at tau)` once the detector has alarmed.
    pub fn alarm(&self) -> Option<(usize, f64)> {
        self.alarm
    }

    pub fn step(&mut self, obs: ChainState) -> Result<Decision> {
        if let Some((tau, _)) = self.alarm {
            return Err(QcdError::AlreadyStopped { tau });
        }
        self.state = scalar_filter_step(self.config.model(), &self.state, obs)?;
        if self.state.no_change <= self.config.threshold() {
            self.alarm = Some((self.state.step, self.state.no_change));
            Ok(Decision::Alarm)
        } else {
            Ok(Decision::Continue)
        }
    }
}

/// Outcome of running the detector over a full trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionResult {
    /// Whether the posterior crossed the threshold within the horizon.
    pub stopped: bool,
    /// First-crossing index (`>= 1`) when stopped.
    pub tau: Option<usize>,
    /// Posterior value at the crossing.
    pub posterior_at_stop: Option<f64>,
    /// Change time carried over from the trajectory, for scoring.
    pub change_time: ChangeTime,
}

/// Drive a detector over a trajectory, stopping at the first crossing.
pub fn run_detection(config: &DetectorConfig, trajectory: &Trajectory) -> Result<DetectionResult> {
    let states = trajectory.states();
    let mut detector = Detector::new(config, states[0]);
    for &obs in &states[1..] {
        if detector.step(obs)? == Decision::Alarm {
            break;
        }
    }
    let alarm = detector.alarm();
    Ok(DetectionResult {
        stopped: alarm.is_some(),
        tau: alarm.map(|(tau, _)| tau),
        posterior_at_stop: alarm.map(|(_, posterior)| posterior),
        change_time: trajectory.change_time(),
    })
}

/// Monte Carlo estimate of the Bayes risk for one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub threshold: f64,
    pub cost_c: f64,
    /// Mean of `max(0, tau - nu)` across trials.
    pub mean_delay: f64,
    pub delay_std_error: f64,
    /// Frequency of `tau < nu`.
    pub false_alarm_prob: f64,
    pub false_alarm_std_error: f64,
    /// Exactly `cost_c * mean_delay + false_alarm_prob`.
    pub bayes_risk: f64,
    pub bayes_risk_std_error: f64,
    pub trials: usize,
    /// Trials with no crossing inside the horizon, scored at tau = T + 1.
    pub censored: usize,
    /// Trials with tau == nu (neither delay nor false alarm).
    pub zero_delay_detections: usize,
}

/// Per-trial crossing times recorded during a threshold sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPaths {
    pub thresholds: Vec<f64>,
    pub estimates: Vec<RiskEstimate>,
    /// `taus[trial][threshold index]`; `None` means censored.
    pub taus: Vec<Vec<Option<usize>>>,
    /// Sampled change time per trial.
    pub change_times: Vec<usize>,
    pub horizon: usize,
}

/// Estimate the Bayes risk of the configured threshold.
///
/// Each trial samples a change time from the prior, simulates a trajectory
/// to the horizon and records the first crossing. Censored trials (no
/// crossing) are scored at `tau = T + 1` and counted separately.
pub fn estimate_risk(
    config: &DetectorConfig,
    cost_c: f64,
    trials: usize,
    horizon: usize,
    master_seed: u64,
) -> Result<RiskEstimate> {
    let paths = sweep_thresholds_with_paths(
        config.model(),
        cost_c,
        &[config.threshold()],
        trials,
        horizon,
        master_seed,
    )?;
    Ok(paths.estimates[0])
}

/// One risk estimate per threshold, under common random numbers.
pub fn sweep_thresholds(
    model: &ChangePointModel,
    cost_c: f64,
    thresholds: &[f64],
    trials: usize,
    horizon: usize,
    master_seed: u64,
) -> Result<Vec<RiskEstimate>> {
    if thresholds.is_empty() {
        return Ok(Vec::new());
    }
    Ok(
        sweep_thresholds_with_paths(model, cost_c, thresholds, trials, horizon, master_seed)?
            .estimates,
    )
}

/// Threshold sweep that also returns the per-trial crossing times.
///
/// Trials parallelise across a rayon pool; each trial derives its stream
/// from `(master_seed, trial index)` and results merge in trial order, so
/// the output is independent of scheduling.
pub fn sweep_thresholds_with_paths(
    model: &ChangePointModel,
    cost_c: f64,
    thresholds: &[f64],
    trials: usize,
    horizon: usize,
    master_seed: u64,
) -> Result<SweepPaths> {
    if !cost_c.is_finite() || cost_c <= 0.0 {
        return Err(QcdError::InvalidCost { value: cost_c });
    }
    if trials == 0 {
        return Err(QcdError::InvalidTrials);
    }
    if horizon == 0 {
        return Err(QcdError::InvalidHorizon);
    }
    for &h in thresholds {
        if !h.is_finite() || !(0.0..=1.0).contains(&h) {
            return Err(QcdError::InvalidThreshold { value: h });
        }
    }

    let outcomes: Vec<Result<(usize, Vec<Option<usize>>)>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = seed::derive(master_seed, TRIAL_STREAM_LABEL, &[trial as u64]);
            let nu = model.prior().sample_change_time(&mut rng);
            let trajectory = model.simulate(horizon, ChangeSpec::Fixed(nu), &mut rng)?;
            let taus = first_crossings(model, &trajectory, thresholds)?;
            Ok((nu, taus))
        })
        .collect();

    let mut change_times = Vec::with_capacity(trials);
    let mut taus = Vec::with_capacity(trials);
    for outcome in outcomes {
        let (nu, trial_taus) = outcome?;
        change_times.push(nu);
        taus.push(trial_taus);
    }

    let estimates = thresholds
        .iter()
        .enumerate()
        .map(|(t_idx, &threshold)| {
            score_threshold(threshold, cost_c, horizon, &change_times, &taus, t_idx)
        })
        .collect();

    Ok(SweepPaths {
        thresholds: thresholds.to_vec(),
        estimates,
        taus,
        change_times,
        horizon,
    })
}

/// First crossing time of each threshold along one trajectory.
fn first_crossings(
    model: &ChangePointModel,
    trajectory: &Trajectory,
    thresholds: &[f64],
) -> Result<Vec<Option<usize>>> {
    let states = trajectory.states();
    let mut taus = vec![None; thresholds.len()];
    let mut remaining = thresholds.len();
    let mut posterior = PosteriorState::initial(states[0]);
    for &obs in &states[1..] {
        posterior = scalar_filter_step(model, &posterior, obs)?;
        for (tau, &h) in taus.iter_mut().zip(thresholds.iter()) {
            if tau.is_none() && posterior.no_change <= h {
                *tau = Some(posterior.step);
                remaining -= 1;
            }
        }
        if remaining == 0 {
            break;
        }
    }
    Ok(taus)
}

fn score_threshold(
    threshold: f64,
    cost_c: f64,
    horizon: usize,
    change_times: &[usize],
    taus: &[Vec<Option<usize>>],
    t_idx: usize,
) -> RiskEstimate {
    let n = change_times.len();
    let mut delays = Vec::with_capacity(n);
    let mut false_alarms = Vec::with_capacity(n);
    let mut censored = 0usize;
    let mut zero_delay = 0usize;
    for (&nu, trial_taus) in change_times.iter().zip(taus.iter()) {
        let tau_effective = match trial_taus[t_idx] {
            Some(tau) => tau,
            None => {
                censored += 1;
                horizon + 1
            }
        };
        let delay = tau_effective.saturating_sub(nu) as f64;
        let false_alarm = if tau_effective < nu { 1.0 } else { 0.0 };
        if tau_effective == nu {
            zero_delay += 1;
        }
        delays.push(delay);
        false_alarms.push(false_alarm);
    }

    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let mean_delay = mean(&delays);
    let false_alarm_prob = mean(&false_alarms);
    let variance = |xs: &[f64], m: f64| {
        if xs.len() < 2 {
            0.0
        } else {
            xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
        }
    };
    let var_delay = variance(&delays, mean_delay);
    let var_fa = variance(&false_alarms, false_alarm_prob);
    let covariance = if n < 2 {
        0.0
    } else {
        delays
            .iter()
            .zip(false_alarms.iter())
            .map(|(&d, &f)| (d - mean_delay) * (f - false_alarm_prob))
            .sum::<f64>()
            / (n - 1) as f64
    };
    let n_f = n as f64;
    let var_risk = cost_c * cost_c * var_delay + var_fa + 2.0 * cost_c * covariance;

    RiskEstimate {
        threshold,
        cost_c,
        mean_delay,
        delay_std_error: (var_delay / n_f).sqrt(),
        false_alarm_prob,
        false_alarm_std_error: (var_fa / n_f).sqrt(),
        bayes_risk: cost_c * mean_delay + false_alarm_prob,
        bayes_risk_std_error: (var_risk.max(0.0) / n_f).sqrt(),
        trials: n,
        censored,
        zero_delay_detections: zero_delay,
    }
}
