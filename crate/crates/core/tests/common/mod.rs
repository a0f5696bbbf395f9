//! Shared builders for integration tests.
#![allow(dead_code)] // each test target uses a different subset

use rand::Rng;

use qcd_core::{seed, ChangePointModel, GeometricPrior, TransitionMatrix};

/// Three-state slow-mixing chain used by the bundled example scenario.
pub fn three_state_slow() -> TransitionMatrix {
    TransitionMatrix::new(vec![
        vec![0.99, 0.005, 0.005],
        vec![0.005, 0.99, 0.005],
        vec![0.005, 0.005, 0.99],
    ])
    .unwrap()
}

/// Three-state fast-mixing after-change chain of the example scenario.
pub fn three_state_fast() -> TransitionMatrix {
    TransitionMatrix::new(vec![
        vec![0.8, 0.1, 0.1],
        vec![0.1, 0.8, 0.1],
        vec![0.1, 0.1, 0.8],
    ])
    .unwrap()
}

/// The bundled three-state illustrative model (rho = 0.005).
pub fn illustrative_model() -> ChangePointModel {
    ChangePointModel::new(
        three_state_slow(),
        three_state_fast(),
        GeometricPrior::new(0.005).unwrap(),
    )
    .unwrap()
}

/// Random column-stochastic matrix with strictly positive entries, hence
/// irreducible and aperiodic.
#[allow(clippy::needless_range_loop)] // j indexes a matrix column
pub fn random_ergodic_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> TransitionMatrix {
    let mut rows = vec![vec![0.0f64; n]; n];
    for j in 0..n {
        let mut column = Vec::with_capacity(n);
        let mut total = 0.0;
        for _ in 0..n {
            // Bounded away from zero so no transition is impossible.
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

/// Random ergodic change-point model of dimension `n`.
pub fn random_model(n: usize, master: u64, index: u64) -> ChangePointModel {
    let mut rng = seed::derive(master, "test-model", &[n as u64, index]);
    let before = random_ergodic_matrix(n, &mut rng);
    let after = random_ergodic_matrix(n, &mut rng);
    let rho = 0.001 + 0.2 * rng.random::<f64>();
    ChangePointModel::new(before, after, GeometricPrior::new(rho).unwrap()).unwrap()
}
