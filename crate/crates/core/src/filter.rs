//! Posterior computation for the no-change hypothesis.
//!
//! Two equivalent routes are provided. [`hmm_filter_step`] runs the full
//! forward filter on the augmented 2N-state model and serves as the
//! reference oracle. [`scalar_filter_step`] runs the one-dimensional
//! recursion
//!
//! ```text
//! m' = (1 - rho) * a_b * m / (a_a + m * (a_b - a_a))
//! ```
//!
//! where `a_b` and `a_a` are the before/after probabilities of the observed
//! transition and `m` is the current no-change posterior. The scalar route
//! does constant work per step regardless of the chain dimension; the two
//! agree to floating-point accuracy, which [`run_filter`] in `Both` mode
//! re-checks on every step.

use crate::chain::ChainState;
use crate::error::{QcdError, Result};
use crate::model::{AugmentedModel, ChangePointModel, Trajectory};

const POSTERIOR_SUM_TOLERANCE: f64 = 1e-12;

/// Posterior over the augmented 2N states given observations to time k.
///
/// For `k > 0` at most two entries are nonzero: the observed chain state's
/// slot in the before block and in the after block.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPosterior {
    probs: Vec<f64>,
}

impl AugmentedPosterior {
    /// Posterior after observing the initial state: a point mass on the
    /// observed state inside the before block (the change time is at
    /// least 1, so no change has occurred at time 0).
    pub fn initial(n: usize, observed: ChainState) -> Self {
        let mut probs = vec![0.0; 2 * n];
        probs[observed.index()] = 1.0;
        Self { probs }
    }

    /// Validate an arbitrary probability vector over 2N augmented states.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 4 || !probs.len().is_multiple_of(2) {
            return Err(QcdError::InvalidPosterior {
                reason: format!("length {} is not an even number >= 4", probs.len()),
            });
        }
        let mut sum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(QcdError::InvalidPosterior {
                    reason: format!("entry {i} is {p}"),
                });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > POSTERIOR_SUM_TOLERANCE {
            return Err(QcdError::InvalidPosterior {
                reason: format!("entries sum to {sum}, expected 1"),
            });
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Number of observed-chain states (half the augmented dimension).
    pub fn n(&self) -> usize {
        self.probs.len() / 2
    }

    /// Total mass on the before block: the no-change posterior.
    pub fn before_mass(&self) -> f64 {
        self.probs[..self.n()].iter().sum()
    }
}

/// Scalar filter state at time k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorState {
    /// Posterior probability that no change has occurred by time k.
    pub no_change: f64,
    /// Log-domain shadow of `no_change`, accumulated additively so runs
    /// that underflow the linear domain remain diagnosable.
    pub log_no_change: f64,
    /// Multiplicative update applied at this step (1 at k = 0).
    pub step_multiplier: f64,
    /// Most recently observed chain state.
    pub last_state: ChainState,
    /// Time index k.
    pub step: usize,
}

impl PosteriorState {
    /// Filter state after observing the initial chain state: the
    /// no-change posterior starts at exactly 1.
    pub fn initial(observed: ChainState) -> Self {
        Self {
            no_change: 1.0,
            log_no_change: 0.0,
            step_multiplier: 1.0,
            last_state: observed,
            step: 0,
        }
    }
}

/// One step of the full forward filter on the augmented model.
///
/// Computes the dense update `normalize(B(obs) * A * prev)` where `B(obs)`
/// selects the two augmented states consistent with the observed chain
/// state. Fails with [`QcdError::ImpossibleObservation`] when the observed
/// state has zero probability under both hypothesis blocks.
pub fn hmm_filter_step(
    aug: &AugmentedModel,
    prev: &AugmentedPosterior,
    obs: ChainState,
) -> Result<AugmentedPosterior> {
    let n = aug.n();
    let size = 2 * n;
    if prev.probs().len() != size {
        return Err(QcdError::DimensionMismatch {
            left: prev.probs().len(),
            right: size,
        });
    }
    if obs.index() >= n {
        return Err(QcdError::StateOutOfRange {
            index: obs.index(),
            n,
        });
    }
    let a = aug.transition();
    let mut predicted = vec![0.0; size];
    for (i, slot) in predicted.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &p) in prev.probs().iter().enumerate() {
            acc += a.entry(i, j) * p;
        }
        *slot = acc;
    }
    // Selector keeps rows obs and n + obs.
    let kept_before = predicted[obs.index()];
    let kept_after = predicted[n + obs.index()];
    let total = kept_before + kept_after;
    if total <= 0.0 {
        return Err(QcdError::ImpossibleObservation { state: obs.index() });
    }
    let mut probs = vec![0.0; size];
    probs[obs.index()] = kept_before / total;
    probs[n + obs.index()] = kept_after / total;
    Ok(AugmentedPosterior { probs })
}

/// One step of the scalar no-change-posterior recursion.
///
/// Constant work per step, independent of the chain dimension. Fails with
/// [`QcdError::ImpossibleTransition`] when the observed transition has zero
/// probability under both chains weighted by the current posterior.
pub fn scalar_filter_step(
    model: &ChangePointModel,
    prev: &PosteriorState,
    obs: ChainState,
) -> Result<PosteriorState> {
    let n = model.dim();
    if obs.index() >= n {
        return Err(QcdError::StateOutOfRange {
            index: obs.index(),
            n,
        });
    }
    let step = prev.step + 1;
    let a_b = model.before().entry(obs.index(), prev.last_state.index());
    let a_a = model.after().entry(obs.index(), prev.last_state.index());
    // Inverse normalisation factor: a convex-combination form with no
    // cancellation for posteriors in [0, 1].
    let norm_inv = a_a + prev.no_change * (a_b - a_a);
    if norm_inv <= 0.0 {
        return Err(QcdError::ImpossibleTransition { step });
    }
    let rho = model.prior().rho();
    let multiplier = (1.0 - rho) * a_b / norm_inv;
    let no_change = (multiplier * prev.no_change).min(1.0);
    let log_no_change = prev.log_no_change + multiplier.ln();
    Ok(PosteriorState {
        no_change,
        log_no_change,
        step_multiplier: multiplier,
        last_state: obs,
        step,
    })
}

/// Which posterior route(s) [`run_filter`] executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    /// Scalar recursion only (production path).
    Scalar,
    /// Full augmented filter only.
    Full,
    /// Both routes, recording the largest per-step disagreement.
    Both,
}

/// Posterior trace over a whole trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTrace {
    /// Per-step scalar state, indices 0..=horizon. In `Full` mode these
    /// are reconstructed from the augmented posterior's before-block mass.
    pub states: Vec<PosteriorState>,
    /// Augmented posteriors (present in `Full` and `Both` modes).
    pub augmented: Option<Vec<AugmentedPosterior>>,
    /// Max over steps of |scalar - before-block mass| (`Both` mode only).
    pub max_discrepancy: Option<f64>,
}

/// Run the posterior filter over a trajectory.
pub fn run_filter(
    model: &ChangePointModel,
    trajectory: &Trajectory,
    mode: FilterMode,
) -> Result<PosteriorTrace> {
    let states = trajectory.states();
    let x0 = states[0];
    if x0.index() >= model.dim() {
        return Err(QcdError::StateOutOfRange {
            index: x0.index(),
            n: model.dim(),
        });
    }
    match mode {
        FilterMode::Scalar => {
            let mut trace = Vec::with_capacity(states.len());
            trace.push(PosteriorState::initial(x0));
            for &obs in &states[1..] {
                let next = scalar_filter_step(model, trace.last().unwrap(), obs)?;
                trace.push(next);
            }
            Ok(PosteriorTrace {
                states: trace,
                augmented: None,
                max_discrepancy: None,
            })
        }
        FilterMode::Full => {
            let aug = model.augmented();
            let mut full = Vec::with_capacity(states.len());
            full.push(AugmentedPosterior::initial(model.dim(), x0));
            for &obs in &states[1..] {
                let next = hmm_filter_step(&aug, full.last().unwrap(), obs)?;
                full.push(next);
            }
            let mut trace = Vec::with_capacity(states.len());
            let mut log_mass = 0.0;
            let mut prev_mass = 1.0;
            for (k, (post, &obs)) in full.iter().zip(states.iter()).enumerate() {
                let mass = if k == 0 { 1.0 } else { post.before_mass() };
                let multiplier = if k == 0 {
                    1.0
                } else if prev_mass > 0.0 {
                    mass / prev_mass
                } else {
                    0.0
                };
                if k > 0 {
                    log_mass += multiplier.ln();
                }
                trace.push(PosteriorState {
                    no_change: mass,
                    log_no_change: log_mass,
                    step_multiplier: multiplier,
                    last_state: obs,
                    step: k,
                });
                prev_mass = mass;
            }
            Ok(PosteriorTrace {
                states: trace,
                augmented: Some(full),
                max_discrepancy: None,
            })
        }
        FilterMode::Both => {
            let aug = model.augmented();
            let mut trace = Vec::with_capacity(states.len());
            let mut full = Vec::with_capacity(states.len());
            trace.push(PosteriorState::initial(x0));
            full.push(AugmentedPosterior::initial(model.dim(), x0));
            let mut max_discrepancy = 0.0f64;
            for &obs in &states[1..] {
                let scalar = scalar_filter_step(model, trace.last().unwrap(), obs)?;
                let dense = hmm_filter_step(&aug, full.last().unwrap(), obs)?;
                max_discrepancy =
                    max_discrepancy.max((scalar.no_change - dense.before_mass()).abs());
                trace.push(scalar);
                full.push(dense);
            }
            Ok(PosteriorTrace {
                states: trace,
                augmented: Some(full),
                max_discrepancy: Some(max_discrepancy),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{two_state_symmetric, TransitionMatrix};
    use crate::model::{ChangeSpec, GeometricPrior};
    use crate::seed;

    fn two_state_model(stay_after: f64) -> ChangePointModel {
        ChangePointModel::new(
            two_state_symmetric(0.99).unwrap(),
            two_state_symmetric(stay_after).unwrap(),
            GeometricPrior::new(0.005).unwrap(),
        )
        .unwrap()
    }

    fn three_state_model() -> ChangePointModel {
        let before = TransitionMatrix::new(vec![
            vec![0.99, 0.005, 0.005],
            vec![0.005, 0.99, 0.005],
            vec![0.005, 0.005, 0.99],
        ])
        .unwrap();
        let after = TransitionMatrix::new(vec![
            vec![0.8, 0.1, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.1, 0.1, 0.8],
        ])
        .unwrap();
        ChangePointModel::new(before, after, GeometricPrior::new(0.005).unwrap()).unwrap()
    }

    #[test]
    fn full_step_output_is_supported_on_observed_state_only() {
        let model = two_state_model(0.84);
        let aug = model.augmented();
        let prev = AugmentedPosterior::from_probs(vec![0.25; 4]).unwrap();
        let post = hmm_filter_step(&aug, &prev, ChainState::new(1)).unwrap();
        assert_eq!(post.probs()[0], 0.0);
        assert_eq!(post.probs()[2], 0.0);
        assert!(post.probs()[1] > 0.0 && post.probs()[3] > 0.0);
        let sum: f64 = post.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_step_matches_hand_computed_before_mass() {
        // Point mass at state 0 in the before block; observing another
        // self-transition keeps the before mass at 0.98505 / 0.99 = 0.995.
        let model = three_state_model();
        let aug = model.augmented();
        let prev = AugmentedPosterior::initial(3, ChainState::new(0));
        let post = hmm_filter_step(&aug, &prev, ChainState::new(0)).unwrap();
        assert!((post.before_mass() - 0.995).abs() < 1e-12);
    }

    #[test]
    fn scalar_step_matches_hand_evaluation() {
        let model = two_state_model(0.84);
        let start = PosteriorState::initial(ChainState::new(0));

        // Self-transition: norm_inv = 0.84 + 1 * (0.99 - 0.84) = 0.99,
        // multiplier = 0.995 * 0.99 / 0.99, posterior 0.995.
        let first = scalar_filter_step(&model, &start, ChainState::new(0)).unwrap();
        assert!((first.no_change - 0.995).abs() < 1e-12);

        // Switch: norm_inv = 0.16 + 0.995 * (0.01 - 0.16) = 0.01075,
        // posterior = 0.995 * 0.01 * 0.995 / 0.01075.
        let second = scalar_filter_step(&model, &first, ChainState::new(1)).unwrap();
        let expected = 0.995 * 0.01 * 0.995 / 0.01075;
        assert!((second.no_change - expected).abs() < 1e-12);
        assert!((second.no_change - 0.92095).abs() < 1e-5);

        // Oracle agreement on the same two observations.
        let aug = model.augmented();
        let z0 = AugmentedPosterior::initial(2, ChainState::new(0));
        let z1 = hmm_filter_step(&aug, &z0, ChainState::new(0)).unwrap();
        let z2 = hmm_filter_step(&aug, &z1, ChainState::new(1)).unwrap();
        assert!((z1.before_mass() - first.no_change).abs() < 1e-14);
        assert!((z2.before_mass() - second.no_change).abs() < 1e-14);
    }

    #[test]
    fn identical_chains_decay_geometrically() {
        let model = ChangePointModel::new(
            two_state_symmetric(0.99).unwrap(),
            two_state_symmetric(0.99).unwrap(),
            GeometricPrior::new(0.005).unwrap(),
        )
        .unwrap();
        let mut rng = seed::derive(31, "filter-test", &[0]);
        let traj = model.simulate(5000, ChangeSpec::Never, &mut rng).unwrap();
        let trace = run_filter(&model, &traj, FilterMode::Scalar).unwrap();
        for state in &trace.states {
            let expected = 0.995f64.powi(state.step as i32);
            let rel = (state.no_change - expected).abs() / expected;
            assert!(
                rel <= 1e-12,
                "step {}: {} vs {expected}",
                state.step,
                state.no_change
            );
        }
    }

    #[test]
    fn log_shadow_tracks_linear_posterior() {
        let model = three_state_model();
        let mut rng = seed::derive(37, "filter-test", &[1]);
        let traj = model
            .simulate(3000, ChangeSpec::Fixed(1000), &mut rng)
            .unwrap();
        let trace = run_filter(&model, &traj, FilterMode::Scalar).unwrap();
        for state in &trace.states {
            if state.no_change > 1e-300 {
                let rel = (state.log_no_change.exp() - state.no_change).abs() / state.no_change;
                assert!(rel <= 1e-9, "step {}: relative gap {rel}", state.step);
            }
        }
    }

    #[test]
    fn zero_posterior_is_absorbing() {
        // The before chain forbids the 0 -> 1 transition while the after
        // chain allows it. Once the posterior is below 1, observing that
        // transition drives it to exactly zero, where it stays.
        let before = TransitionMatrix::new(vec![vec![1.0, 0.2], vec![0.0, 0.8]]).unwrap();
        let after = TransitionMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let model = ChangePointModel::with_options(
            before,
            after,
            GeometricPrior::new(0.005).unwrap(),
            Some(vec![1.0, 0.0]),
            true,
        )
        .unwrap();
        let start = PosteriorState::initial(ChainState::new(0));
        let settled = scalar_filter_step(&model, &start, ChainState::new(0)).unwrap();
        assert!(settled.no_change < 1.0);
        let hit = scalar_filter_step(&model, &settled, ChainState::new(1)).unwrap();
        assert_eq!(hit.no_change, 0.0);
        assert_eq!(hit.step_multiplier, 0.0);
        assert_eq!(hit.log_no_change, f64::NEG_INFINITY);
        let next = scalar_filter_step(&model, &hit, ChainState::new(0)).unwrap();
        assert_eq!(next.no_change, 0.0);
    }

    #[test]
    fn certain_posterior_makes_forbidden_before_transition_impossible() {
        // At posterior exactly 1 even the change-entering step moves by
        // the before chain, so a transition it forbids cannot be explained.
        let before = TransitionMatrix::new(vec![vec![1.0, 0.2], vec![0.0, 0.8]]).unwrap();
        let after = TransitionMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let model = ChangePointModel::with_options(
            before,
            after,
            GeometricPrior::new(0.005).unwrap(),
            Some(vec![1.0, 0.0]),
            true,
        )
        .unwrap();
        let start = PosteriorState::initial(ChainState::new(0));
        assert!(matches!(
            scalar_filter_step(&model, &start, ChainState::new(1)),
            Err(QcdError::ImpossibleTransition { step: 1 })
        ));
    }

    #[test]
    fn impossible_transition_fails_loudly() {
        // Both chains forbid leaving state 0.
        let stay = TransitionMatrix::new(vec![vec![1.0, 0.5], vec![0.0, 0.5]]).unwrap();
        let model = ChangePointModel::with_options(
            stay.clone(),
            stay,
            GeometricPrior::new(0.005).unwrap(),
            Some(vec![1.0, 0.0]),
            true,
        )
        .unwrap();
        let start = PosteriorState::initial(ChainState::new(0));
        assert!(matches!(
            scalar_filter_step(&model, &start, ChainState::new(1)),
            Err(QcdError::ImpossibleTransition { step: 1 })
        ));

        let aug = model.augmented();
        let z0 = AugmentedPosterior::initial(2, ChainState::new(0));
        assert!(matches!(
            hmm_filter_step(&aug, &z0, ChainState::new(1)),
            Err(QcdError::ImpossibleObservation { state: 1 })
        ));
    }

    #[test]
    fn run_filter_single_state_trajectory() {
        let model = two_state_model(0.84);
        let traj =
            Trajectory::new(vec![ChainState::new(1)], crate::model::ChangeTime::Never).unwrap();
        let trace = run_filter(&model, &traj, FilterMode::Both).unwrap();
        assert_eq!(trace.states.len(), 1);
        assert_eq!(trace.states[0].no_change, 1.0);
        assert_eq!(trace.max_discrepancy, Some(0.0));
    }

    #[test]
    fn both_mode_routes_agree_on_example_scenario() {
        let model = three_state_model();
        let mut rng = seed::derive(41, "filter-test", &[2]);
        let traj = model
            .simulate(2000, ChangeSpec::Fixed(1000), &mut rng)
            .unwrap();
        let trace = run_filter(&model, &traj, FilterMode::Both).unwrap();
        assert!(trace.max_discrepancy.unwrap() <= 1e-12);

        // Qualitative shape: high before the change, collapsed after.
        let pre: f64 = trace.states[900..1000]
            .iter()
            .map(|s| s.no_change)
            .fold(f64::INFINITY, f64::min);
        assert!(pre > 0.4, "pre-change minimum {pre}");
        let terminal = trace.states.last().unwrap().no_change;
        assert!(terminal < 1e-6, "terminal posterior {terminal}");
    }

    #[test]
    fn full_mode_reports_block_mass_trace() {
        let model = two_state_model(0.84);
        let mut rng = seed::derive(43, "filter-test", &[3]);
        let traj = model.simulate(200, ChangeSpec::Sample, &mut rng).unwrap();
        let full = run_filter(&model, &traj, FilterMode::Full).unwrap();
        let scalar = run_filter(&model, &traj, FilterMode::Scalar).unwrap();
        for (f, s) in full.states.iter().zip(scalar.states.iter()) {
            assert!((f.no_change - s.no_change).abs() <= 1e-12);
        }
        let augmented = full.augmented.unwrap();
        for post in &augmented {
            let sum: f64 = post.probs().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
