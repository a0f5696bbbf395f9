//! Finite-state Markov chain primitives: validation, structure checks,
//! stationary distributions, step sampling and the relative entropy rate.
//!
//! Transition matrices are column-stochastic: `entry(i, j)` is the
//! probability of moving to state `i` given the chain currently sits in
//! state `j`, so every column sums to one. All logarithms are natural.

use rand::Rng;

use crate::error::{QcdError, Result};

/// Tolerance on column sums accepted by [`TransitionMatrix::new`].
pub const COLUMN_SUM_TOLERANCE: f64 = 1e-9;

/// Residual at which the stationary solve stops iterating.
const STATIONARY_RESIDUAL_TARGET: f64 = 1e-12;

/// Iteration budget for the stationary solve.
const MAX_STATIONARY_ITERATIONS: usize = 1_000_000;

/// Index of a chain state, in `[0, N)` for the owning `N`-state chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChainState(usize);

impl ChainState {
    pub fn new(index: usize) -> Self {
        Self(index)
    }

    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for ChainState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Validated column-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    /// Row-major storage: `entries[i * n + j] = P(next = i | current = j)`.
    entries: Vec<f64>,
}

impl TransitionMatrix {
    /// Validate a nested row array into a transition matrix.
    ///
    /// `rows[i][j]` is the probability of moving to state `i` from state
    /// `j`; every column must sum to one within [`COLUMN_SUM_TOLERANCE`].
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(QcdError::DimensionTooSmall { n });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(QcdError::NotSquare {
                    row: i,
                    len: row.len(),
                    n,
                });
            }
        }
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            for (j, &value) in row.iter().enumerate() {
                if value < 0.0 {
                    return Err(QcdError::NegativeEntry {
                        row: i,
                        column: j,
                        value,
                    });
                }
                if !value.is_finite() || value > 1.0 {
                    return Err(QcdError::EntryOutOfRange {
                        row: i,
                        column: j,
                        value,
                    });
                }
                entries.push(value);
            }
        }
        let matrix = Self { n, entries };
        for j in 0..n {
            let sum = matrix.column_sum(j);
            if (sum - 1.0).abs() > COLUMN_SUM_TOLERANCE {
                return Err(QcdError::NonStochastic {
                    column: j,
                    sum,
                    tolerance: COLUMN_SUM_TOLERANCE,
                });
            }
        }
        Ok(matrix)
    }

    /// Construct from already-validated parts. Used for derived matrices
    /// whose columns sum to one by algebraic identity (block assembly).
    pub(crate) fn from_validated(n: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), n * n);
        Self { n, entries }
    }

    /// Number of states.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// `P(next = i | current = j)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    fn column_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.entry(i, j)).sum()
    }

    /// Irreducibility and periodicity report.
    ///
    /// Irreducibility is strong connectivity of the directed graph with an
    /// edge `j -> i` wherever `entry(i, j) > 0`. The period is the gcd of
    /// cycle lengths through the class containing state 0; a report with
    /// `period == 0` means no cycle passes through state 0 at all.
    pub fn structure(&self) -> StructureReport {
        let forward = self.reachable(false);
        let backward = self.reachable(true);
        let irreducible = forward.iter().all(|&r| r) && backward.iter().all(|&r| r);

        // Strongly connected class of state 0.
        let class: Vec<bool> = forward
            .iter()
            .zip(backward.iter())
            .map(|(&f, &b)| f && b)
            .collect();

        let period = self.class_period(&class);
        let aperiodic = period == 1;
        StructureReport {
            irreducible,
            aperiodic,
            period,
        }
    }

    /// States reachable from state 0 (transposed graph when `reverse`).
    fn reachable(&self, reverse: bool) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(j) = stack.pop() {
            for (i, visited) in seen.iter_mut().enumerate() {
                let weight = if reverse {
                    self.entry(j, i)
                } else {
                    self.entry(i, j)
                };
                if weight > 0.0 && !*visited {
                    *visited = true;
                    stack.push(i);
                }
            }
        }
        seen
    }

    /// Gcd of cycle lengths within the strongly connected class of state 0,
    /// via the standard BFS level trick: gcd over edges of
    /// `level(u) + 1 - level(v)`.
    fn class_period(&self, class: &[bool]) -> usize {
        let mut level = vec![usize::MAX; self.n];
        level[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(j) = queue.pop_front() {
            for i in 0..self.n {
                if class[i] && self.entry(i, j) > 0.0 && level[i] == usize::MAX {
                    level[i] = level[j] + 1;
                    queue.push_back(i);
                }
            }
        }
        let mut g: i64 = 0;
        for j in 0..self.n {
            if !class[j] || level[j] == usize::MAX {
                continue;
            }
            for i in 0..self.n {
                if class[i] && self.entry(i, j) > 0.0 && level[i] != usize::MAX {
                    let diff = level[j] as i64 + 1 - level[i] as i64;
                    g = gcd(g.abs(), diff.abs());
                }
            }
        }
        g as usize
    }

    /// Unique stationary distribution of an ergodic chain.
    ///
    /// Power iteration with l1 renormalisation, run on the lazy chain
    /// `(A + I) / 2` (same fixed point, always aperiodic), stopping when
    /// the fixed-point residual of the original chain drops to 1e-12.
    pub fn stationary(&self) -> Result<StationaryDistribution> {
        let report = self.structure();
        if !(report.irreducible && report.aperiodic) {
            return Err(QcdError::NotErgodic {
                irreducible: report.irreducible,
                period: report.period,
            });
        }
        self.stationary_of_irreducible()
    }

    /// Stationary solve requiring only irreducibility (periodic chains
    /// still have a unique stationary distribution).
    pub(crate) fn stationary_of_irreducible(&self) -> Result<StationaryDistribution> {
        let n = self.n;
        let mut probs = vec![1.0 / n as f64; n];
        let mut image = vec![0.0; n];
        let mut residual = f64::INFINITY;
        for _ in 0..MAX_STATIONARY_ITERATIONS {
            self.apply(&probs, &mut image);
            residual = probs
                .iter()
                .zip(image.iter())
                .map(|(&p, &ap)| (ap - p).abs())
                .fold(0.0, f64::max);
            if residual <= STATIONARY_RESIDUAL_TARGET {
                let total: f64 = probs.iter().sum();
                for p in &mut probs {
                    *p /= total;
                }
                return Ok(StationaryDistribution { probs });
            }
            // Lazy step keeps periodic chains from oscillating.
            let mut total = 0.0;
            for (p, &ap) in probs.iter_mut().zip(image.iter()) {
                *p = 0.5 * (*p + ap);
                total += *p;
            }
            for p in &mut probs {
                *p /= total;
            }
        }
        Err(QcdError::NoConvergence {
            iterations: MAX_STATIONARY_ITERATIONS,
            residual,
        })
    }

    /// `out = A * x`.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &xj) in x.iter().enumerate() {
                acc += self.entry(i, j) * xj;
            }
            *slot = acc;
        }
    }

    /// Draw the successor of `current` from that state's column.
    ///
    /// Deterministic given the generator stream.
    pub fn sample_step<R: Rng + ?Sized>(&self, current: ChainState, rng: &mut R) -> ChainState {
        assert!(
            current.index() < self.n,
            "state index {} out of range for {}-state chain",
            current.index(),
            self.n
        );
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += self.entry(i, current.index());
            if u < acc {
                return ChainState::new(i);
            }
        }
        // Column sums carry up to 1e-9 slack; fall back to the last
        // positive-probability successor.
        for i in (0..self.n).rev() {
            if self.entry(i, current.index()) > 0.0 {
                return ChainState::new(i);
            }
        }
        ChainState::new(self.n - 1)
    }
}

/// Irreducibility/periodicity summary of a transition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructureReport {
    pub irreducible: bool,
    pub aperiodic: bool,
    /// Gcd of cycle lengths through state 0's class (0 if no cycle).
    pub period: usize,
}

/// Stationary distribution of an irreducible chain.
///
/// Entries are nonnegative, sum to one within 1e-12 and satisfy the fixed
/// point `A * probs = probs` with infinity-norm residual at most 1e-10.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    probs: Vec<f64>,
}

impl StationaryDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

/// Relative entropy rate between two chains:
/// `sum_j pi_before(j) * sum_i before(i,j) * ln(before(i,j) / after(i,j))`
/// with `pi_before` the stationary distribution of `before`.
///
/// Terms with `before(i,j) = 0` contribute zero; a term with
/// `before(i,j) > 0` and `after(i,j) = 0` makes the rate `+inf` (the chains
/// are infinitely separated, signalled in-band rather than as an error).
/// Requires only that `before` is irreducible.
pub fn relative_entropy_rate(before: &TransitionMatrix, after: &TransitionMatrix) -> Result<f64> {
    if before.dim() != after.dim() {
        return Err(QcdError::DimensionMismatch {
            left: before.dim(),
            right: after.dim(),
        });
    }
    let report = before.structure();
    if !report.irreducible {
        return Err(QcdError::NotErgodic {
            irreducible: report.irreducible,
            period: report.period,
        });
    }
    let pi = before.stationary_of_irreducible()?;
    let n = before.dim();
    let mut rate = 0.0;
    for j in 0..n {
        let weight = pi.probs()[j];
        for i in 0..n {
            let p = before.entry(i, j);
            if p == 0.0 {
                continue;
            }
            let q = after.entry(i, j);
            if q == 0.0 {
                return Ok(f64::INFINITY);
            }
            rate += weight * p * (p / q).ln();
        }
    }
    // Mathematically nonnegative; clip rounding noise from nearly
    // identical chains.
    Ok(rate.max(0.0))
}

/// Symmetric two-state chain `[[stay, 1-stay], [1-stay, stay]]`.
pub fn two_state_symmetric(stay: f64) -> Result<TransitionMatrix> {
    TransitionMatrix::new(vec![vec![stay, 1.0 - stay], vec![1.0 - stay, stay]])
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
