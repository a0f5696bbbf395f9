//! Reproducible stream derivation.
//!
//! Every Monte Carlo driver in this crate derives its per-trial generator
//! from `(master seed, purpose label, indices)`. Streams are keyed by the
//! label and index values rather than by execution order, so adding grid
//! points or thresholds never perturbs the streams of existing trials.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn absorb(hash: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *hash ^= u64::from(b);
        *hash = hash.wrapping_mul(FNV_PRIME);
    }
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent generator for `(master, label, indices)`.
pub fn derive(master: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    let mut h = FNV_OFFSET;
    absorb(&mut h, &master.to_le_bytes());
    absorb(&mut h, label.as_bytes());
    for &ix in indices {
        absorb(&mut h, &ix.to_le_bytes());
    }
    let mut state = h;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
