//! Change-point model assembly: geometric change-time prior, the augmented
//! 2N-state hidden Markov model, and trajectory simulation.
//!
//! A [`ChangePointModel`] pairs a before-change chain with an after-change
//! chain of the same dimension. The chain switches generator at a random
//! time `nu >= 1`: the transition into index `nu` still uses the before
//! matrix, and every transition from `nu + 1` onward uses the after matrix.

use rand::Rng;

use crate::chain::{ChainState, TransitionMatrix};
use crate::error::{QcdError, Result};

const INITIAL_SUM_TOLERANCE: f64 = 1e-12;

/// Geometric prior on the change time: `P(nu = k) = (1-rho)^(k-1) * rho`
/// for `k >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricPrior {
    rho: f64,
}

impl GeometricPrior {
    pub fn new(rho: f64) -> Result<Self> {
        if !rho.is_finite() || rho <= 0.0 || rho >= 1.0 {
            return Err(QcdError::InvalidRho { rho });
        }
        Ok(Self { rho })
    }

    /// Per-step change probability.
    pub fn rho(self) -> f64 {
        self.rho
    }

    /// Probability mass at `k >= 1` (zero for `k == 0`).
    pub fn pmf(self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        (1.0 - self.rho).powf((k - 1) as f64) * self.rho
    }

    /// Draw a change time from the prior by inverse CDF, so each draw
    /// consumes exactly one uniform from the stream.
    pub fn sample_change_time<R: Rng + ?Sized>(self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        // F(k) = 1 - (1-rho)^k, so nu = floor(ln(1-u)/ln(1-rho)) + 1.
        let t = (1.0 - u).ln() / (1.0 - self.rho).ln();
        t.floor() as usize + 1
    }
}

/// How the change time is chosen for a simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangeSpec {
    /// Change at a fixed index `nu >= 1` (possibly beyond the horizon).
    Fixed(usize),
    /// Draw the change time from the model's prior.
    Sample,
    /// No change ever occurs: the before chain generates every transition.
    Never,
}

/// Realized change time carried by a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangeTime {
    At(usize),
    Never,
}

impl ChangeTime {
    /// Whether the change has occurred by time index `k` (i.e. `nu <= k`).
    pub fn changed_by(self, k: usize) -> bool {
        match self {
            ChangeTime::At(nu) => nu <= k,
            ChangeTime::Never => false,
        }
    }
}

impl std::fmt::Display for ChangeTime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChangeTime::At(nu) => write!(f, "{nu}"),
            ChangeTime::Never => write!(f, "never"),
        }
    }
}

/// Before/after chain pair with a geometric change prior and an initial
/// distribution for the observed state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangePointModel {
    before: TransitionMatrix,
    after: TransitionMatrix,
    prior: GeometricPrior,
    initial: Vec<f64>,
}

impl ChangePointModel {
    /// Build a model whose initial distribution is the stationary law of
    /// the before chain. Both chains must be ergodic.
    pub fn new(
        before: TransitionMatrix,
        after: TransitionMatrix,
        prior: GeometricPrior,
    ) -> Result<Self> {
        Self::with_options(before, after, prior, None, false)
    }

    /// Build a model with an explicit initial distribution. Both chains
    /// must be ergodic.
    pub fn with_initial(
        before: TransitionMatrix,
        after: TransitionMatrix,
        prior: GeometricPrior,
        initial: Vec<f64>,
    ) -> Result<Self> {
        Self::with_options(before, after, prior, Some(initial), false)
    }

    /// Full construction. `allow_nonergodic` skips the structural check on
    /// both chains; the filter stays well defined, but separation and
    /// drift diagnostics will refuse such models.
    pub fn with_options(
        before: TransitionMatrix,
        after: TransitionMatrix,
        prior: GeometricPrior,
        initial: Option<Vec<f64>>,
        allow_nonergodic: bool,
    ) -> Result<Self> {
        if before.dim() != after.dim() {
            return Err(QcdError::DimensionMismatch {
                left: before.dim(),
                right: after.dim(),
            });
        }
        if !allow_nonergodic {
            for matrix in [&before, &after] {
                let report = matrix.structure();
                if !(report.irreducible && report.aperiodic) {
                    return Err(QcdError::NotErgodic {
                        irreducible: report.irreducible,
                        period: report.period,
                    });
                }
            }
        }
        let initial = match initial {
            Some(vector) => {
                validate_distribution(&vector, before.dim())?;
                vector
            }
            None => before.stationary()?.into_vec(),
        };
        Ok(Self {
            before,
            after,
            prior,
            initial,
        })
    }

    pub fn dim(&self) -> usize {
        self.before.dim()
    }

    pub fn before(&self) -> &TransitionMatrix {
        &self.before
    }

    pub fn after(&self) -> &TransitionMatrix {
        &self.after
    }

    pub fn prior(&self) -> GeometricPrior {
        self.prior
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Augmented 2N-state representation of this model.
    pub fn augmented(&self) -> AugmentedModel {
        AugmentedModel::build(&self.before, &self.after, self.prior.rho())
            .expect("validated model parts always assemble")
    }

    /// Simulate a state trajectory of `horizon + 1` states (indices
    /// `0..=horizon`). The initial state is drawn from the model's initial
    /// distribution; the transition into index `k` uses the before chain
    /// for `k <= nu` and the after chain from `nu + 1` onward.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        horizon: usize,
        change: ChangeSpec,
        rng: &mut R,
    ) -> Result<Trajectory> {
        if horizon < 1 {
            return Err(QcdError::InvalidHorizon);
        }
        let change_time = match change {
            ChangeSpec::Fixed(nu) => {
                if nu < 1 {
                    return Err(QcdError::InvalidChangeTime { value: nu });
                }
                ChangeTime::At(nu)
            }
            ChangeSpec::Sample => ChangeTime::At(self.prior.sample_change_time(rng)),
            ChangeSpec::Never => ChangeTime::Never,
        };
        let mut states = Vec::with_capacity(horizon + 1);
        states.push(sample_categorical(&self.initial, rng));
        for step in 1..=horizon {
            let generator = match change_time {
                ChangeTime::Never => &self.before,
                ChangeTime::At(nu) if step <= nu => &self.before,
                ChangeTime::At(_) => &self.after,
            };
            let next = generator.sample_step(states[step - 1], rng);
            states.push(next);
        }
        Trajectory::new(states, change_time)
    }
}

fn validate_distribution(probs: &[f64], n: usize) -> Result<()> {
    if probs.len() != n {
        return Err(QcdError::InvalidDistribution {
            reason: format!("length {} does not match chain dimension {n}", probs.len()),
        });
    }
    let mut sum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(QcdError::InvalidDistribution {
                reason: format!("entry {i} is {p}"),
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > INITIAL_SUM_TOLERANCE {
        return Err(QcdError::InvalidDistribution {
            reason: format!("entries sum to {sum}, expected 1"),
        });
    }
    Ok(())
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> ChainState {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return ChainState::new(i);
        }
    }
    for (i, &p) in probs.iter().enumerate().rev() {
        if p > 0.0 {
            return ChainState::new(i);
        }
    }
    ChainState::new(probs.len() - 1)
}

/// Augmented 2N-state hidden Markov model.
///
/// States `0..N` mean "no change yet, chain at i"; states `N..2N` mean
/// "change occurred, chain at i". The transition matrix has block form
/// `[[(1-rho)*before, 0], [rho*before, after]]` and the emission matrix is
/// `[I | I]`: the observed chain state reveals the position but not the
/// hypothesis block.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    n: usize,
    transition: TransitionMatrix,
    /// Row-major `N x 2N` 0/1 emission matrix.
    emission: Vec<f64>,
}

impl AugmentedModel {
    /// Assemble the block matrix for a given per-step change probability.
    /// `rho = 0` gives the no-change limit: the top-left block is the
    /// before chain itself and the lower-left block vanishes.
    pub fn build(before: &TransitionMatrix, after: &TransitionMatrix, rho: f64) -> Result<Self> {
        if before.dim() != after.dim() {
            return Err(QcdError::DimensionMismatch {
                left: before.dim(),
                right: after.dim(),
            });
        }
        if !rho.is_finite() || !(0.0..1.0).contains(&rho) {
            return Err(QcdError::InvalidRho { rho });
        }
        let n = before.dim();
        let size = 2 * n;
        let mut entries = vec![0.0; size * size];
        for i in 0..n {
            for j in 0..n {
                entries[i * size + j] = (1.0 - rho) * before.entry(i, j);
                entries[(n + i) * size + j] = rho * before.entry(i, j);
                entries[(n + i) * size + (n + j)] = after.entry(i, j);
            }
        }
        let mut emission = vec![0.0; n * size];
        for i in 0..n {
            emission[i * size + i] = 1.0;
            emission[i * size + n + i] = 1.0;
        }
        Ok(Self {
            n,
            transition: TransitionMatrix::from_validated(size, entries),
            emission,
        })
    }

    /// Dimension of the observed chain (the augmented chain has `2n`).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn transition(&self) -> &TransitionMatrix {
        &self.transition
    }

    /// Emission probability `P(observed = i | augmented state = j)`.
    pub fn emission_entry(&self, i: usize, j: usize) -> f64 {
        self.emission[i * 2 * self.n + j]
    }
}

/// Realized state sequence with its (possibly unobserved) change time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<ChainState>,
    change_time: ChangeTime,
}

impl Trajectory {
    pub fn new(states: Vec<ChainState>, change_time: ChangeTime) -> Result<Self> {
        if states.is_empty() {
            return Err(QcdError::InvalidHorizon);
        }
        if let ChangeTime::At(nu) = change_time {
            if nu < 1 {
                return Err(QcdError::InvalidChangeTime { value: nu });
            }
        }
        Ok(Self {
            states,
            change_time,
        })
    }

    pub fn states(&self) -> &[ChainState] {
        &self.states
    }

    /// Largest time index (`states` has `horizon + 1` entries).
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn change_time(&self) -> ChangeTime {
        self.change_time
    }
}
