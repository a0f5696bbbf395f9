//! Benchmark-only crate; see `benches/filter.rs`.
//!
//! Shared setup helpers for building seeded models of arbitrary dimension.

use rand::Rng;

use qcd_core::{seed, ChangePointModel, GeometricPrior, TransitionMatrix};

/// Random ergodic column-stochastic matrix with entries bounded away from
/// zero.
#[allow(clippy::needless_range_loop)] // j indexes a matrix column
pub fn random_ergodic_matrix(n: usize, stream: u64) -> TransitionMatrix {
    let mut rng = seed::derive(0xBE7C, "bench-matrix", &[n as u64, stream]);
    let mut rows = vec![vec![0.0f64; n]; n];
    for j in 0..n {
        let mut column = Vec::with_capacity(n);
        let mut total = 0.0;
        for _ in 0..n {
            let w = 0.05 + rng.random::<f64>();
            column.push(w);
            total += w;
        }
        for (i, w) in column.into_iter().enumerate() {
            rows[i][j] = w / total;
        }
    }
    TransitionMatrix::new(rows).unwrap()
}

/// Seeded ergodic model of dimension `n`.
pub fn model_of_dimension(n: usize) -> ChangePointModel {
    ChangePointModel::new(
        random_ergodic_matrix(n, 0),
        random_ergodic_matrix(n, 1),
        GeometricPrior::new(0.005).unwrap(),
    )
    .unwrap()
}
